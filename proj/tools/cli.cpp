#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "fusilade/errors.hpp"
#include "fusilade/report.hpp"

namespace fusilade::cli {

namespace fs = std::filesystem;

namespace {

enum Sub : unsigned {
  kPreprocess = 1u << 0,
  kExtract = 1u << 1,
  kSynth = 1u << 2,
  kTrain = 1u << 3,
  kAblate = 1u << 4,
  kMetrics = 1u << 5,
};
constexpr unsigned kModel = kTrain | kAblate;

struct SubInfo {
  std::string name;
  Sub bit;
  std::string help;
};

const std::vector<SubInfo>& sub_table() {
  static const std::vector<SubInfo> t = {
      {"preprocess-genes", kPreprocess, "Clean an expression CSV: shift-log, z-score, IQR masking, imputation"},
      {"extract-patches", kExtract, "Tile slide images, keep tissue patches and write a manifest per image"},
      {"synth", kSynth, "Write a synthetic dataset bundle"},
      {"train", kTrain, "Cross-validate one fusion strategy on a bundle"},
      {"ablate", kAblate, "Cross-validate every strategy on a bundle under the same folds"},
      {"metrics", kMetrics, "Score a predictions CSV (label, probability columns)"},
  };
  return t;
}

Sub sub_bit(std::string_view name) {
  for (const auto& s : sub_table())
    if (s.name == name) return s.bit;
  throw ConfigError("unknown subcommand '" + std::string(name) + "'");
}

// --- value codecs ---------------------------------------------------------------

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (v.empty() || ec != std::errc{} || p != end || !std::isfinite(x))
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (v.empty() || ec != std::errc{} || p != end)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string num(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string num(std::uint64_t x) { return std::to_string(x); }
std::string flag(bool b) { return b ? "true" : "false"; }

std::string impute_name(genomics::ImputeStrategy s) {
  return s == genomics::ImputeStrategy::median ? "median" : "mean";
}
std::string axis_name(genomics::IqrAxis a) {
  return a == genomics::IqrAxis::per_patient ? "per_patient" : "per_gene";
}
std::string estimator_name(metrics::PrEstimator e) {
  return e == metrics::PrEstimator::trapezoid ? "trapezoid" : "average_precision";
}

// --- key table -------------------------------------------------------------------

struct Key {
  std::string name;
  unsigned subs;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  std::string type = "NAME";
};

template <class Field>
Key real(std::string name, unsigned subs, std::string help, Field field) {
  return {name, subs, std::move(help),
          [name, field](RunConfig& c, const std::string& v) { field(c) = to_double(name, v); },
          [field](const RunConfig& c) { return num(static_cast<double>(field(c))); }, "FLOAT"};
}

template <class Field>
Key count(std::string name, unsigned subs, std::string help, Field field) {
  return {name, subs, std::move(help),
          [name, field](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(field(c))>;
            field(c) = static_cast<T>(to_u64(name, v));
          },
          [field](const RunConfig& c) { return num(static_cast<std::uint64_t>(field(c))); }, "INT"};
}

template <class Field>
Key boolean(std::string name, unsigned subs, std::string help, Field field) {
  return {name, subs, std::move(help),
          [name, field](RunConfig& c, const std::string& v) { field(c) = to_bool(name, v); },
          [field](const RunConfig& c) { return flag(field(c)); }, "BOOL"};
}

const std::vector<Key>& key_table() {
  static const std::vector<Key> t = {
      count("seed", kModel | kSynth | kExtract, "Run seed (folds, initialisation, generator, augmentation)",
            [](auto& c) -> auto& { return c.seed; }),
      {"strategy", kTrain, "Fusion strategy: cross_attention, concat, gene_only, image_only or late",
       [](RunConfig& c, const std::string& v) { c.strategy = model::parse_strategy(v); },
       [](const RunConfig& c) { return std::string(model::to_string(c.strategy)); }},
      real("learning-rate", kModel, "Adam step size", [](auto& c) -> auto& { return c.train.learning_rate; }),
      real("beta1", kModel, "Adam first-moment decay", [](auto& c) -> auto& { return c.train.beta1; }),
      real("beta2", kModel, "Adam second-moment decay", [](auto& c) -> auto& { return c.train.beta2; }),
      real("eps-adam", kModel, "Adam denominator epsilon", [](auto& c) -> auto& { return c.train.eps_adam; }),
      count("max-epochs", kModel, "Epoch limit per fold", [](auto& c) -> auto& { return c.train.max_epochs; }),
      count("batch-size", kModel, "Mini-batch size", [](auto& c) -> auto& { return c.train.batch_size; }),
      count("patience", kModel, "Epochs without validation improvement before stopping",
            [](auto& c) -> auto& { return c.train.patience; }),
      real("min-delta", kModel, "Smallest validation-loss drop that counts as improvement",
           [](auto& c) -> auto& { return c.train.min_delta; }),
      count("folds", kModel, "Cross-validation folds", [](auto& c) -> auto& { return c.train.folds; }),
      count("hidden", kModel, "Encoder hidden width", [](auto& c) -> auto& { return c.dims.hidden; }),
      count("embed", kModel, "Encoder output width", [](auto& c) -> auto& { return c.dims.embed; }),
      count("heads", kModel, "Attention heads", [](auto& c) -> auto& { return c.dims.heads; }),
      count("head-dim", kModel, "Width per attention head", [](auto& c) -> auto& { return c.dims.head_dim; }),
      boolean("bidirectional", kModel, "Let patches also attend to the gene token",
              [](auto& c) -> auto& { return c.dims.bidirectional; }),
      boolean("preprocess", kModel, "Fit gene cleaning per training fold",
              [](auto& c) -> auto& { return c.preprocess; }),
      {"impute", kModel | kPreprocess, "Missing-value fill: mean or median",
       [](RunConfig& c, const std::string& v) {
         if (v == "mean")
           c.preprocessing.impute = genomics::ImputeStrategy::mean;
         else if (v == "median")
           c.preprocessing.impute = genomics::ImputeStrategy::median;
         else
           throw ConfigError("impute: expected mean or median, got '" + v + "'");
       },
       [](const RunConfig& c) { return impute_name(c.preprocessing.impute); }},
      real("iqr-k", kModel | kPreprocess, "IQR fence multiplier",
           [](auto& c) -> auto& { return c.preprocessing.iqr_k; }),
      {"iqr-axis", kModel | kPreprocess, "IQR fences per_gene or per_patient",
       [](RunConfig& c, const std::string& v) {
         if (v == "per_gene")
           c.preprocessing.iqr_axis = genomics::IqrAxis::per_gene;
         else if (v == "per_patient")
           c.preprocessing.iqr_axis = genomics::IqrAxis::per_patient;
         else
           throw ConfigError("iqr-axis: expected per_gene or per_patient, got '" + v + "'");
       },
       [](const RunConfig& c) { return axis_name(c.preprocessing.iqr_axis); }},
      boolean("parallel-folds", kModel, "Train folds on worker threads",
              [](auto& c) -> auto& { return c.parallel_folds; }),
      boolean("pooled", kModel, "Also score the pooled out-of-fold predictions",
              [](auto& c) -> auto& { return c.pooled; }),
      {"pr-estimator", kModel | kMetrics, "PR-AUC estimator: average_precision or trapezoid",
       [](RunConfig& c, const std::string& v) {
         if (v == "average_precision")
           c.estimator = metrics::PrEstimator::average_precision;
         else if (v == "trapezoid")
           c.estimator = metrics::PrEstimator::trapezoid;
         else
           throw ConfigError("pr-estimator: expected average_precision or trapezoid, got '" + v + "'");
       },
       [](const RunConfig& c) { return estimator_name(c.estimator); }},
      real("threshold", kModel | kMetrics, "Decision threshold (positive iff p >= threshold)",
           [](auto& c) -> auto& { return c.threshold; }),
      real("min-tissue-fraction", kExtract, "Tissue share needed to keep a patch",
           [](auto& c) -> auto& { return c.patches.min_tissue_fraction; }),
      count("patch-size", kExtract, "Patch edge in pixels", [](auto& c) -> auto& { return c.patches.patch; }),
      count("stride", kExtract, "Grid step in pixels", [](auto& c) -> auto& { return c.patches.stride; }),
      count("top-patches", kExtract, "Patches kept per image, most tissue first",
            [](auto& c) -> auto& { return c.top_patches; }),
      count("augment", kExtract, "Colour-jittered, rotated copies written per kept patch",
            [](auto& c) -> auto& { return c.augment; }),
      count("n-patients", kSynth, "Patients", [](auto& c) -> auto& { return c.synth.n_patients; }),
      count("genes", kSynth, "Genes per patient", [](auto& c) -> auto& { return c.synth.genes; }),
      count("patches", kSynth, "Patch rows per patient", [](auto& c) -> auto& { return c.synth.patches; }),
      count("dims", kSynth, "Feature width per patch", [](auto& c) -> auto& { return c.synth.dims; }),
      real("gene-snr", kSynth, "Class signal strength in expression",
           [](auto& c) -> auto& { return c.synth.gene_snr; }),
      real("image-snr", kSynth, "Class signal strength in patch features",
           [](auto& c) -> auto& { return c.synth.image_snr; }),
      real("overlap", kSynth, "Share of the image signal carried by the gene latent",
           [](auto& c) -> auto& { return c.synth.overlap; }),
  };
  return t;
}

const Key* find_key(const std::string& name) {
  for (const auto& k : key_table())
    if (k.name == name) return &k;
  return nullptr;
}

bool in_sub(const Key& k, std::string_view sub) { return (k.subs & sub_bit(sub)) != 0; }

void apply_all(RunConfig& c, const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) set_key(c, c.subcommand, k, v);
}

fs::path input_path(const RunConfig& c) {
  switch (sub_bit(c.subcommand)) {
    case kPreprocess: return c.genes;
    case kExtract: return c.images;
    case kTrain:
    case kAblate: return c.bundle;
    case kMetrics: return c.predictions;
    default: return {};
  }
}

void require_exists(const fs::path& p, const char* flag_name, bool directory) {
  if (p.empty()) throw ConfigError(std::string(flag_name) + " is required");
  std::error_code ec;
  const bool ok = directory ? fs::is_directory(p, ec) : fs::is_regular_file(p, ec);
  if (!ok)
    throw ConfigError(std::string(flag_name) + ": no such " + (directory ? "directory" : "file") + " '" +
                      p.string() + "'");
}

train::ExperimentConfig experiment(const RunConfig& c) {
  train::ExperimentConfig e;
  e.train = c.train;
  e.train.seed = c.seed;
  e.dims = c.dims;
  e.preprocessing = c.preprocessing;
  e.preprocess = c.preprocess;
  e.parallel_folds = c.parallel_folds;
  e.pooled = c.pooled;
  e.estimator = c.estimator;
  e.threshold = c.threshold;
  return e;
}

std::string summary_line(const train::EvalReport& r) {
  char buf[256];
  const auto& a = r.aggregate;
  std::snprintf(buf, sizeof buf, "%-15s accuracy %.3f +- %.3f  f1 %.3f +- %.3f  mcc %.3f  pr_auc %.3f +- %.3f",
                std::string(model::to_string(r.strategy)).c_str(), a.accuracy.mean, a.accuracy.std, a.f1.mean,
                a.f1.std, a.mcc.mean, a.pr_auc.mean, a.pr_auc.std);
  return buf;
}

// --- subcommands ---------------------------------------------------------------------

void run_preprocess(const RunConfig& c, std::ostream& out) {
  const auto m = io::read_gene_csv(c.genes);
  const auto res = genomics::fit_pipeline(m, c.preprocessing);
  fs::create_directories(c.out);
  io::write_gene_csv(res.cleaned, c.out / "cleaned.csv");
  io::write_text(c.out / "stats.json", io::pipeline_json(res));
  out << m.patient_ids.size() << " patients x " << m.gene_ids.size() << " genes, " << res.outliers.size()
      << " outliers masked, " << res.zscore_failures.size() << " z-score failures\n";
}

void run_extract(const RunConfig& c, std::ostream& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(c.images)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError(c.images.string() + ": no .png or .ppm images");
  std::set<std::string> stems;
  for (const auto& f : files)
    if (!stems.insert(f.stem().string()).second) throw DataError("two images share the name '" + f.stem().string() + "'");

  fs::create_directories(c.out / "patches");
  Rng rng(c.seed);
  for (const auto& f : files) {
    const auto stem = f.stem().string();
    const auto img = histology::read_image(f);
    const auto man = histology::extract_patches(img, c.patches, stem);
    io::write_text(c.out / (stem + ".manifest.json"), io::manifest_json(man));
    const auto kept = histology::select_top_patches(man, c.top_patches);
    for (const auto& p : kept) {
      const auto name = stem + "_" + std::to_string(p.x) + "_" + std::to_string(p.y);
      const auto tile = img.crop(p.x, p.y, c.patches.patch, c.patches.patch);
      histology::write_ppm(tile, c.out / "patches" / (name + ".ppm"));
      for (std::size_t k = 1; k <= c.augment; ++k) {
        const auto aug = histology::random_rotate(histology::color_jitter(tile, rng), rng);
        histology::write_ppm(aug, c.out / "patches" / (name + "_aug" + std::to_string(k) + ".ppm"));
      }
    }
    out << stem << ": threshold " << man.threshold << ", " << man.accepted().size() << " of " << man.grid.size()
        << " patches accepted, " << kept.size() << " kept" << (man.degenerate ? " (single grey level)" : "")
        << "\n";
  }
}

void run_synth(const RunConfig& c, std::ostream& out) {
  auto o = c.synth;
  o.seed = c.seed;
  const auto bundle = io::generate_synthetic(o);
  io::write_bundle(bundle, c.out);
  out << "wrote " << bundle.labels.size() << " patients to " << c.out.string() << "\n";
}

void run_train(const RunConfig& c, std::ostream& out) {
  const auto cohort = io::to_cohort(io::read_bundle(c.bundle));
  auto rep = train::run_cv_experiment(cohort, c.strategy, experiment(c));
  rep.config = config_echo(c);
  fs::create_directories(c.out);
  io::write_report(rep, c.out / "report.json", io::ReportFormat::json);
  io::write_report(rep, c.out / "summary.csv", io::ReportFormat::csv_summary);
  io::write_text(c.out / "curve.csv", io::curve_csv(rep));
  out << summary_line(rep) << "\n";
}

void run_ablate(const RunConfig& c, std::ostream& out) {
  const auto cohort = io::to_cohort(io::read_bundle(c.bundle));
  auto rep = train::run_ablation(cohort, experiment(c));
  rep.config = config_echo(c);
  for (auto& r : rep.runs) r.config = rep.config;
  fs::create_directories(c.out);
  io::write_report(rep, c.out / "ablation.json", io::ReportFormat::json);
  io::write_report(rep, c.out / "summary.csv", io::ReportFormat::csv_summary);
  io::write_text(c.out / "curve.csv", io::curve_csv(rep));
  for (const auto& r : rep.runs) out << summary_line(r) << "\n";
}

void run_metrics(const RunConfig& c, std::ostream& out) {
  const auto t = io::read_predictions_csv(c.predictions);
  const auto m = metrics::evaluate(t.labels, t.probabilities, c.threshold, c.estimator);
  const auto json = io::to_json(m);
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    io::write_text(c.out / "metrics.json", json);
  }
  out << json;
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  c.train.learning_rate = 3e-4;
  c.dims.hidden = 64;
  c.dims.embed = 32;
  c.dims.heads = 4;
  c.dims.head_dim = 8;
  return c;
}

void apply_paper_config(RunConfig& c) {
  const train::TrainConfig base;
  c.train.learning_rate = 1e-5;
  c.train.folds = 5;
  c.train.max_epochs = base.max_epochs;
  c.train.patience = base.patience;
  c.train.min_delta = base.min_delta;
  c.train.batch_size = base.batch_size;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& s : sub_table()) n.push_back(s.name);
    return n;
  }();
  return names;
}

std::vector<std::string> keys_for(std::string_view subcommand) {
  std::vector<std::string> out;
  for (const auto& k : key_table())
    if (in_sub(k, subcommand)) out.push_back(k.name);
  return out;
}

void set_key(RunConfig& c, std::string_view subcommand, const std::string& key, const std::string& value) {
  const Key* k = find_key(key);
  if (k == nullptr || !in_sub(*k, subcommand))
    throw ConfigError("unknown key '" + key + "' for " + std::string(subcommand));
  k->set(c, value);
}

std::map<std::string, std::string> parse_config_file(std::string_view text, const std::string& source) {
  std::map<std::string, std::string> values;
  std::istringstream in{std::string(text)};
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = source + ":" + std::to_string(n);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!values.emplace(key, value).second) throw ConfigError(where + ": key '" + key + "' repeated");
  }
  return values;
}

std::map<std::string, std::string> config_echo(const RunConfig& c) {
  std::map<std::string, std::string> echo;
  for (const auto& k : key_table())
    if (in_sub(k, c.subcommand)) echo[k.name] = k.get(c);
  echo["subcommand"] = c.subcommand;
  echo["input"] = input_path(c).string();
  return echo;
}

void validate(const RunConfig& c) {
  const auto sub = sub_bit(c.subcommand);
  if (sub & kModel) {
    c.train.validate();
    if (c.dims.hidden == 0) throw ConfigError("hidden must be positive");
    if (c.dims.embed == 0) throw ConfigError("embed must be positive");
    if (c.dims.heads == 0) throw ConfigError("heads must be positive");
    if (c.dims.head_dim == 0) throw ConfigError("head-dim must be positive");
  }
  if (sub & (kModel | kPreprocess)) {
    if (!(c.preprocessing.iqr_k >= 0.0)) throw ConfigError("iqr-k must be non-negative");
  }
  if (sub & (kModel | kMetrics)) {
    if (c.threshold < 0.0 || c.threshold > 1.0) throw ConfigError("threshold must lie in [0, 1]");
  }
  if (sub & kExtract) {
    if (c.patches.patch == 0) throw ConfigError("patch-size must be positive");
    if (c.patches.stride == 0) throw ConfigError("stride must be positive");
    if (c.patches.min_tissue_fraction < 0.0 || c.patches.min_tissue_fraction > 1.0)
      throw ConfigError("min-tissue-fraction must lie in [0, 1]");
  }
  if (sub & kSynth) {
    auto o = c.synth;
    o.seed = c.seed;
    o.validate();
  }
  switch (sub) {
    case kPreprocess: require_exists(c.genes, "--genes", false); break;
    case kExtract: require_exists(c.images, "--images", true); break;
    case kTrain:
    case kAblate: require_exists(c.bundle, "--bundle", true); break;
    case kMetrics: require_exists(c.predictions, "--pred", false); break;
    default: break;
  }
  if (sub != kMetrics && c.out.empty()) throw ConfigError("--out is required");
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto defaults = default_config();
  RunConfig parsed = defaults;
  std::map<std::string, std::string> cli_values;
  fs::path config_path;
  bool paper = false;

  CLI::App app{"Gene expression and histology fusion for breast cancer subtype classification.", "fusilade"};
  app.require_subcommand(1, 1);
  app.footer("Exit status: 0 success, 1 invalid arguments or configuration, 2 runtime failure.\n"
             "Precedence: flags > --paper-config > FUSILADE_SEED > --config file > defaults.");
  for (const auto& s : sub_table()) {
    auto* sc = app.add_subcommand(s.name, s.help);
    auto path_option = [sc](const std::string& name, fs::path& target, const std::string& help) {
      sc->add_option(name, target, help)->type_name("PATH");
    };
    path_option("--config", config_path, "Flat key = value file; keys are the long flag names");
    switch (s.bit) {
      case kPreprocess: path_option("--genes", parsed.genes, "Expression CSV (patient_id, genes...)"); break;
      case kExtract: path_option("--images", parsed.images, "Directory of .png / .ppm slide images"); break;
      case kTrain:
      case kAblate:
        path_option("--bundle", parsed.bundle, "Dataset bundle directory");
        sc->add_flag("--paper-config", paper, "Use lr 1e-5, 5 folds, patience 10, up to 200 epochs, batch 16");
        break;
      case kMetrics: path_option("--pred", parsed.predictions, "Predictions CSV with label and probability"); break;
      default: break;
    }
    path_option("--out", parsed.out, s.bit == kMetrics ? "Also write metrics.json here" : "Output directory");
    for (const auto& k : key_table()) {
      if (!(k.subs & s.bit)) continue;
      sc->add_option_function<std::string>(
            "--" + k.name, [&cli_values, name = k.name](const std::string& v) { cli_values[name] = v; }, k.help)
          ->type_name(k.type)
          ->default_str(k.get(defaults));
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return static_cast<int>(ExitCode::ok);
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return static_cast<int>(ExitCode::ok);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
    return static_cast<int>(ExitCode::validation);
  }

  RunConfig c = parsed;
  c.subcommand = app.get_subcommands().front()->get_name();
  try {
    if (!config_path.empty()) {
      std::string text;
      try {
        text = io::read_text(config_path);
      } catch (const FormatError& e) {
        throw ConfigError(e.what());
      }
      apply_all(c, parse_config_file(text, config_path.string()));
    }
    if (const char* env = std::getenv("FUSILADE_SEED"); env != nullptr && find_key("seed")->subs & sub_bit(c.subcommand))
      c.seed = to_u64("FUSILADE_SEED", env);
    if (paper) apply_paper_config(c);
    apply_all(c, cli_values);
    validate(c);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  }

  try {
    switch (sub_bit(c.subcommand)) {
      case kPreprocess: run_preprocess(c, out); break;
      case kExtract: run_extract(c, out); break;
      case kSynth: run_synth(c, out); break;
      case kTrain: run_train(c, out); break;
      case kAblate: run_ablate(c, out); break;
      case kMetrics: run_metrics(c, out); break;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::runtime);
  }
  return static_cast<int>(ExitCode::ok);
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace fusilade::cli
