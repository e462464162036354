#pragma once

// Command-line front end: subcommand dispatch, layered configuration and the
// config echo written into reports.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fusilade/dataio.hpp"
#include "fusilade/genomics.hpp"
#include "fusilade/histology.hpp"
#include "fusilade/metrics.hpp"
#include "fusilade/model.hpp"
#include "fusilade/train.hpp"

namespace fusilade::cli {

enum class ExitCode : int { ok = 0, validation = 1, runtime = 2 };

struct RunConfig {
  std::string subcommand;
  // inputs and output
  std::filesystem::path bundle;
  std::filesystem::path genes;
  std::filesystem::path images;
  std::filesystem::path predictions;
  std::filesystem::path out;

  std::uint64_t seed = 7;
  train::TrainConfig train;
  model::ModelDims dims;
  model::Strategy strategy = model::Strategy::cross_attention;
  genomics::PipelineOptions preprocessing;
  bool preprocess = true;
  bool parallel_folds = false;
  bool pooled = false;
  metrics::PrEstimator estimator = metrics::PrEstimator::average_precision;
  double threshold = metrics::kDefaultThreshold;

  histology::PatchOptions patches;
  std::size_t top_patches = 35;
  std::size_t augment = 0;  // jittered, rotated copies per kept patch

  io::SynthOptions synth;
};

/// Desk-scale defaults: lr 3e-4, 64/32 encoders, 4 heads of 8.
RunConfig default_config();

/// lr 1e-5, 5 folds, BCE with early stopping (patience 10, up to 200 epochs, batch 16).
void apply_paper_config(RunConfig& c);

/// Subcommand names in help order.
const std::vector<std::string>& subcommands();

/// Config keys accepted by a subcommand; each is also a long flag.
std::vector<std::string> keys_for(std::string_view subcommand);

/// Sets one key from its text form. Throws ConfigError on an unknown key or a
/// malformed value.
void set_key(RunConfig& c, std::string_view subcommand, const std::string& key, const std::string& value);

/// Flat "key = value" lines; '#' starts a comment. Throws ConfigError with the
/// line number on malformed or repeated keys.
std::map<std::string, std::string> parse_config_file(std::string_view text, const std::string& source);

/// Every key of the subcommand in text form, plus "subcommand" and the input path.
/// Applying it to default_config() reproduces the same echo.
std::map<std::string, std::string> config_echo(const RunConfig& c);

/// Throws ConfigError naming the first invalid field or missing input.
void validate(const RunConfig& c);

/// args excludes the program name. Returns 0, 1 (validation) or 2 (runtime).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace fusilade::cli
