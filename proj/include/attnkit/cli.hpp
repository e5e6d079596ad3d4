#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "attnkit/common.hpp"
#include "attnkit/gaze.hpp"
#include "attnkit/ml/folds.hpp"
#include "attnkit/ml/pipeline.hpp"
#include "attnkit/sequences.hpp"
#include "attnkit/synchrony.hpp"
#include "json.hpp"

namespace attnkit::cli {

inline constexpr const char* kVersion = "0.1.0";

// Bad flags, bad config keys or values: exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

// Unreadable input or unwritable output: exit code 1.
class IoError : public Error {
public:
    using Error::Error;
};

struct SynchronyConfig {
    std::size_t grid_cols = 64;
    std::size_t grid_rows = 36;
    std::optional<double> sigma_px;  // default follows the screen geometry
    synchrony::Weighting weighting = synchrony::Weighting::Count;
    bool symmetrize_kld = true;
    double isc_period_ms = 40.0;
};

struct SequenceConfig {
    double indel = 1.0;
    double substitution = 1.0;
    std::size_t k = 2;
    std::size_t k_max = 6;
    sequences::WardInput ward_input = sequences::WardInput::Squared;
};

struct RunConfig {
    std::uint64_t seed = 0;
    gaze::ScreenGeometry geometry;
    gaze::DetectionParams detection;
    double window_s = 10.0;
    double sampling_rate_hz = 250.0;
    gaze::QualityRules quality;
    SynchronyConfig synchrony;
    SequenceConfig sequences;
    ml::PipelineSpec pipeline;
    ml::FoldScheme folds;
    std::string out_dir = ".";
};

// Every key is optional; unknown keys raise UsageError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
gaze::ScreenGeometry geometry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const gaze::ScreenGeometry& g);

std::string sha256_hex(const std::string& bytes);

// Writes via a temporary sibling file and rename; creates parent directories.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

// Runs one subcommand. `args` excludes the program name. Returns the exit code:
// 0 success, 1 I/O or data error, 2 usage error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace attnkit::cli
