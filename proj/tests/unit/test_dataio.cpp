#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fusilade/dataio.hpp"
#include "fusilade/errors.hpp"
#include "fusilade/report.hpp"
#include "helpers.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace fusilade;
using nlohmann::json;

namespace {

std::vector<std::uint8_t> pfm_header(const std::string& id, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> b{'P', 'F', 'M', '1'};
  b.push_back(static_cast<std::uint8_t>(id.size() & 0xff));
  b.push_back(static_cast<std::uint8_t>(id.size() >> 8));
  b.insert(b.end(), id.begin(), id.end());
  for (std::uint32_t v : {rows, cols})
    for (int s = 0; s < 32; s += 8) b.push_back(static_cast<std::uint8_t>(v >> s));
  return b;
}

model::PatchFeatureMatrix random_features(Rng& rng) {
  model::PatchFeatureMatrix m;
  m.patient_id = "P" + std::to_string(rng.below(100000));
  m.features = Tensor2(1 + rng.below(6), 1 + rng.below(9));
  for (auto& v : m.features.values()) v = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-8, 8)));
  return m;
}

json random_json(Rng& rng, int depth) {
  const auto kind = depth <= 0 ? rng.below(4) : rng.below(6);
  switch (kind) {
    case 0: return rng.normal() * std::pow(10.0, rng.uniform(-12, 12));
    case 1: return static_cast<std::int64_t>(rng.below(1u << 30)) - (1 << 29);
    case 2: {
      std::string s;
      for (std::size_t i = 0, n = rng.below(8); i < n; ++i) s += static_cast<char>(' ' + rng.below(95));
      return s;
    }
    case 3: return rng.below(2) == 1;
    case 4: {
      json a = json::array();
      for (std::size_t i = 0, n = rng.below(5); i < n; ++i) a.push_back(random_json(rng, depth - 1));
      return a;
    }
    default: {
      json o = json::object();
      for (std::size_t i = 0, n = rng.below(5); i < n; ++i) o["k" + std::to_string(rng.below(50))] = random_json(rng, depth - 1);
      return o;
    }
  }
}

/// Log expression standardized with training statistics only.
std::vector<std::vector<double>> standardize(const std::vector<std::vector<double>>& x,
                                             const std::vector<std::size_t>& fit_rows) {
  const std::size_t d = x.front().size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (auto i : fit_rows)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[i][j];
  for (auto& v : mu) v /= static_cast<double>(fit_rows.size());
  for (auto i : fit_rows)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (x[i][j] - mu[j]) * (x[i][j] - mu[j]);
  for (auto& v : sd) v = std::sqrt(v / static_cast<double>(fit_rows.size())) + 1e-12;
  auto out = x;
  for (auto& row : out)
    for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - mu[j]) / sd[j];
  return out;
}

/// Mean per-fold average precision of an L2 logistic oracle under 5-fold CV
/// with folds i mod 5.
double oracle_cv_ap(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  double total = 0;
  for (std::size_t f = 0; f < 5; ++f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < y.size(); ++i) (i % 5 == f ? va : tr).push_back(i);
    const auto z = standardize(x, tr);
    std::vector<std::vector<double>> xt;
    std::vector<int> yt;
    for (auto i : tr) {
      xt.push_back(z[i]);
      yt.push_back(y[i]);
    }
    const auto w = oracle::fit_logistic(xt, yt);
    std::vector<int> yv;
    std::vector<double> sv;
    for (auto i : va) {
      yv.push_back(y[i]);
      sv.push_back(oracle::logistic_score(w, z[i]));
    }
    total += oracle::average_precision(yv, sv);
  }
  return total / 5.0;
}

struct Features {
  std::vector<std::vector<double>> genes, pooled;
  std::vector<int> labels;
};

Features oracle_features(const io::DatasetBundle& b) {
  Features f;
  for (std::size_t p = 0; p < b.genes.patients(); ++p) {
    const auto& id = b.genes.patient_ids[p];
    std::vector<double> g;
    for (double v : b.genes.values.row(p)) g.push_back(std::log(v));
    f.genes.push_back(g);
    const auto& t = b.features.at(id).features;
    std::vector<double> mean(t.cols(), 0.0);
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < t.cols(); ++c) mean[c] += t(r, c) / static_cast<double>(t.rows());
    f.pooled.push_back(mean);
    f.labels.push_back(b.labels.at(id));
  }
  return f;
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("gene CSV parses a well-formed file with missing cells") {
  const auto m = io::parse_gene_csv("patient_id,g1,g2,g3\nA,1,2,3\nB,4,,6\n");
  CHECK(m.patients() == 2);
  CHECK(m.genes() == 3);
  CHECK(m.gene_ids == std::vector<std::string>{"g1", "g2", "g3"});
  CHECK(m.is_present(0, 1));
  CHECK_FALSE(m.is_present(1, 1));
  CHECK(m.values(1, 2) == 6.0);
  CHECK(m.missing_count() == 1);
}

TEST_CASE("gene CSV errors carry line numbers") {
  try {
    io::parse_gene_csv("patient_id,g1,g2,g3\nA,1,2,3\nB,4,5\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3: expected 4 fields") != std::string::npos);
  }
  CHECK_THROWS_AS(io::parse_gene_csv("patient_id,g1\nA,1\nA,2\n"), FormatError);
  CHECK_THROWS_AS(io::parse_gene_csv("patient_id,g1,g1\nA,1,2\n"), FormatError);
  CHECK_THROWS_WITH_AS(io::parse_gene_csv("patient_id,g1\nA,abc\n"), doctest::Contains("line 2"), FormatError);
  CHECK_THROWS_AS(io::parse_gene_csv("gene,g1\nA,1\n"), FormatError);
  CHECK_THROWS_AS(io::parse_gene_csv(""), FormatError);
}

TEST_CASE("gene CSV round-trips values exactly") {
  Rng rng(1);
  Tensor2 t(4, 5);
  for (auto& v : t.values()) v = rng.normal() * 1e3;
  genomics::GeneMatrix m({"a", "b", "c", "d"}, {"v", "w", "x", "y", "z"}, t);
  m.set_missing(2, 3);
  const auto text = io::format_gene_csv(m);
  const auto back = io::parse_gene_csv(text);
  CHECK(back.values(0, 0) == m.values(0, 0));
  CHECK(back.present == m.present);
  CHECK(io::format_gene_csv(back) == text);
}

TEST_CASE("labels and predictions CSV") {
  const auto l = io::parse_labels_csv("patient_id,subtype\nA,BRCA.LumA\nB,BRCA.Basal\nC,1\n");
  CHECK(l.at("A") == 0);
  CHECK(l.at("B") == 1);
  CHECK(l.at("C") == 1);
  CHECK_THROWS_AS(io::parse_labels_csv("patient_id,subtype\nA,BRCA.Normal\n"), FormatError);

  const auto p = io::parse_predictions_csv("patient_id,probability,label\nA,0.9,1\nB,0.2,0\n");
  CHECK(p.labels == std::vector<int>{1, 0});
  CHECK(p.probabilities == std::vector<double>{0.9, 0.2});
  CHECK(p.patient_ids == std::vector<std::string>{"A", "B"});
  CHECK_THROWS_AS(io::parse_predictions_csv("label\n1\n"), FormatError);
  CHECK_THROWS_AS(io::parse_predictions_csv("label,probability\n2,0.5\n"), FormatError);
}

TEST_CASE("PFM handles a 35 by 2048 matrix") {
  model::PatchFeatureMatrix m;
  m.patient_id = "TCGA-01";
  m.features = Tensor2(35, 2048, 0.5);
  const auto bytes = io::encode_pfm(m);
  const auto back = io::decode_pfm(bytes);
  CHECK(back.features.rows() == 35);
  CHECK(back.features.cols() == 2048);
  CHECK(back.patient_id == "TCGA-01");

  auto cut = bytes;
  cut.resize(cut.size() - 10);
  try {
    io::decode_pfm(cut);
    FAIL("expected PfmError");
  } catch (const io::PfmError& e) {
    CHECK(e.kind() == io::PfmError::Kind::truncated);
    INFO(std::string(e.what()));
    CHECK(std::string(e.what()).find("expected 71680 floats (286720 bytes), got 71677") != std::string::npos);
  }
}

TEST_CASE("PFM errors are distinct") {
  auto good = io::encode_pfm({"x", Tensor2(2, 2, 1.0)});
  auto bad = good;
  bad[0] = 'Q';
  CHECK_THROWS_AS(io::decode_pfm(bad), io::PfmError);
  try {
    io::decode_pfm(bad);
  } catch (const io::PfmError& e) {
    CHECK(e.kind() == io::PfmError::Kind::bad_magic);
  }
  bad = good;
  bad.push_back(0);
  try {
    io::decode_pfm(bad);
    FAIL("expected PfmError");
  } catch (const io::PfmError& e) {
    CHECK(e.kind() == io::PfmError::Kind::trailing_bytes);
  }
  auto nan = pfm_header("x", 1, 1);
  const float q = std::numeric_limits<float>::quiet_NaN();
  const auto* raw = reinterpret_cast<const std::uint8_t*>(&q);
  nan.insert(nan.end(), raw, raw + 4);
  try {
    io::decode_pfm(nan);
    FAIL("expected PfmError");
  } catch (const io::PfmError& e) {
    CHECK(e.kind() == io::PfmError::Kind::non_finite);
  }
  CHECK_THROWS_AS(io::decode_pfm(std::vector<std::uint8_t>{'P', 'F'}), io::PfmError);
}

TEST_CASE("PFM write-read-write is byte-identical on random payloads") {
  Rng rng(2);
  testing::TempDir dir("pfm");
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = random_features(rng);
    const auto bytes = io::encode_pfm(m);
    const auto back = io::decode_pfm(bytes);
    CHECK(back.features == m.features);
    CHECK(io::encode_pfm(back) == bytes);
  }
  const auto m = random_features(rng);
  io::write_feature_matrix(m, dir.path() / "f.pfm");
  CHECK(io::read_feature_matrix(dir.path() / "f.pfm").features == m.features);
}

TEST_CASE("canonical JSON write-read-write is byte-identical on random payloads") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto doc = random_json(rng, 4);
    const auto once = io::canonicalize_json(doc.dump());
    const auto twice = io::canonicalize_json(once);
    CHECK(once == twice);
  }
  CHECK(io::canonicalize_json(R"({"b":1,"a":[0.1,-0.0,2.5e-20]})") == std::string(R"({"a":[0.1,0,2.5e-20],"b":1})") + "\n");
  CHECK_THROWS_AS(io::canonicalize_json("{"), FormatError);
}

TEST_CASE("bundles round-trip and synthesis is a pure function of its options") {
  io::SynthOptions o;
  o.n_patients = 24;
  o.genes = 6;
  o.patches = 3;
  o.dims = 4;
  const auto a = io::generate_synthetic(o);
  const auto b = io::generate_synthetic(o);
  CHECK(a.genes.values == b.genes.values);
  CHECK(a.labels == b.labels);
  o.seed = 8;
  CHECK_FALSE(io::generate_synthetic(o).genes.values == a.genes.values);

  testing::TempDir d1("bundle1"), d2("bundle2");
  io::write_bundle(a, d1.path());
  io::write_bundle(b, d2.path());
  for (const auto* f : {"genes.csv", "labels.csv", "bundle.json", "features/P01.pfm"})
    CHECK(io::read_bytes(d1.path() / f) == io::read_bytes(d2.path() / f));
  const auto back = io::read_bundle(d1.path());
  CHECK(back.genes.values == a.genes.values);
  CHECK(back.labels == a.labels);
  CHECK(back.features.size() == 24);
  CHECK(back.features.at("P05").features == a.features.at("P05").features);
  const auto cohort = io::to_cohort(back);
  CHECK(cohort.size() == 24);
  CHECK(cohort.patches[0].rows() == 3);

  o.n_patients = 5;
  CHECK_THROWS_AS(o.validate(), ConfigError);
}

TEST_CASE("a regularised linear oracle finds the gene signal and misses the weak image signal") {
  io::SynthOptions o;
  const auto strong = oracle_features(io::generate_synthetic(o));
  const double gene_ap = oracle_cv_ap(strong.genes, strong.labels);
  INFO("gene-only oracle AP " << gene_ap);
  CHECK(gene_ap > 0.9);

  o.image_snr = 0.1;
  const auto weak = oracle_features(io::generate_synthetic(o));
  const double image_ap = oracle_cv_ap(weak.pooled, weak.labels);
  INFO("image-only oracle AP " << image_ap);
  CHECK(image_ap < 0.75);
}

TEST_CASE("reports round-trip, recompute their aggregate and give the documented CSV shapes") {
  const auto bundle = [] {
    io::SynthOptions o;
    o.n_patients = 30;
    o.genes = 6;
    o.patches = 3;
    o.dims = 4;
    return io::generate_synthetic(o);
  }();
  train::ExperimentConfig cfg;
  cfg.train.learning_rate = 1e-2;
  cfg.train.max_epochs = 3;
  cfg.train.folds = 3;
  cfg.dims.hidden = 4;
  cfg.dims.embed = 3;
  cfg.dims.heads = 1;
  cfg.dims.head_dim = 2;
  auto r = train::run_cv_experiment(io::to_cohort(bundle), model::Strategy::concat, cfg);
  r.config = {{"learning_rate", "0.01"}};

  const auto text = io::to_json(r);
  const auto back = io::eval_report_from_json(text);
  CHECK(io::to_json(back) == text);

  std::vector<metrics::MetricSet> sets;
  for (const auto& f : back.folds) sets.push_back(f.metrics);
  const auto agg = metrics::aggregate_folds(sets);
  CHECK(std::abs(agg.f1.mean - back.aggregate.f1.mean) <= 1e-9);
  CHECK(std::abs(agg.pr_auc.std - back.aggregate.pr_auc.std) <= 1e-9);
  CHECK(std::abs(agg.mcc.mean - back.aggregate.mcc.mean) <= 1e-9);
  CHECK(std::abs(agg.accuracy.mean - back.aggregate.accuracy.mean) <= 1e-9);

  const auto csv = io::csv_summary(r);
  const auto lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(lines == 1 + 3 * 4 + 2 * 4);
  CHECK(csv.rfind("strategy,fold,metric,value\n", 0) == 0);
  CHECK(io::curve_csv(r).rfind("strategy,fold,epoch,train_loss,val_loss\n", 0) == 0);

  CHECK_THROWS_AS(io::eval_report_from_json("{}"), FormatError);
  auto j = json::parse(text);
  j["format_version"] = 99;
  CHECK_THROWS_AS(io::eval_report_from_json(j.dump()), FormatError);
}

}  // TEST_SUITE
