#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnkit {

// Missing values are explicit; nothing downstream stores NaN.
using MaybeReal = std::optional<double>;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
    double norm() const { return std::hypot(x, y); }
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input file does not match the documented column layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Input parses but violates an ordering or range rule (reports the row).
class IngestError : public Error {
public:
    IngestError(const std::string& what, std::size_t row)
        : Error(what + " (row " + std::to_string(row) + ")"), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

// Non-fatal diagnostics. The default sink writes to stderr; tests and the CLI
// may install their own. The sink is guarded by a mutex so parallel kernels may warn.
using WarningSink = std::function<void(const std::string&)>;
void warn(const std::string& message);
WarningSink set_warning_sink(WarningSink sink);

// Collects warnings for the lifetime of the object, restoring the previous sink after.
class WarningCapture {
public:
    WarningCapture();
    ~WarningCapture();
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }
    bool contains(const std::string& needle) const;

private:
    std::vector<std::string> messages_;
    WarningSink previous_;
};

}  // namespace attnkit
