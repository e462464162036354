#include "fusilade/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "binary.hpp"
#include "canonical_json.hpp"
#include "fusilade/rng.hpp"

namespace fusilade::io {

namespace fs = std::filesystem;

// --- files ------------------------------------------------------------------

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

void write_text(const fs::path& path, std::string_view text) {
  write_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// --- CSV --------------------------------------------------------------------

namespace {

struct CsvLine {
  std::size_t number = 0;  // 1-based
  std::vector<std::string_view> fields;
};

std::vector<CsvLine> split_csv(std::string_view text, const std::string& source) {
  std::vector<CsvLine> lines;
  std::size_t pos = 0, number = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (pos >= text.size()) break;
      throw FormatError(source + ": line " + std::to_string(number) + ": empty line");
    }
    if (line.find('"') != std::string_view::npos) {
      throw FormatError(source + ": line " + std::to_string(number) + ": quoted fields are not supported");
    }
    CsvLine l;
    l.number = number;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      if (comma == std::string_view::npos) {
        l.fields.push_back(line.substr(start));
        break;
      }
      l.fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    lines.push_back(std::move(l));
  }
  if (lines.empty()) throw FormatError(source + ": empty file");
  return lines;
}

std::string where(const std::string& source, std::size_t line) {
  return source + ": line " + std::to_string(line);
}

double parse_number(std::string_view s, const std::string& source, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError(where(source, line) + ": '" + std::string(s) + "' is not a number");
  }
  if (!std::isfinite(v)) throw FormatError(where(source, line) + ": non-finite value '" + std::string(s) + "'");
  return v;
}

void expect_fields(const CsvLine& l, std::size_t n, const std::string& source) {
  if (l.fields.size() != n) {
    throw FormatError(where(source, l.number) + ": expected " + std::to_string(n) + " fields, got " +
                      std::to_string(l.fields.size()));
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

genomics::GeneMatrix parse_gene_csv(std::string_view text, const std::string& source) {
  const auto lines = split_csv(text, source);
  const auto& header = lines.front();
  if (header.fields.empty() || header.fields[0] != "patient_id") {
    throw FormatError(where(source, 1) + ": header must start with 'patient_id'");
  }
  const std::size_t ncols = header.fields.size();
  genomics::GeneMatrix m;
  for (std::size_t c = 1; c < ncols; ++c) {
    if (header.fields[c].empty()) throw FormatError(where(source, 1) + ": empty gene ID in column " + std::to_string(c + 1));
    m.gene_ids.emplace_back(header.fields[c]);
  }
  if (m.gene_ids.empty()) throw FormatError(where(source, 1) + ": no gene columns");
  const std::size_t G = m.gene_ids.size();
  std::vector<double> values;
  std::set<std::string> seen_genes(m.gene_ids.begin(), m.gene_ids.end());
  if (seen_genes.size() != G) throw FormatError(where(source, 1) + ": duplicate gene ID");
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    expect_fields(l, ncols, source);
    std::string id(l.fields[0]);
    if (id.empty()) throw FormatError(where(source, l.number) + ": empty patient ID");
    if (!seen.insert(id).second) throw FormatError(where(source, l.number) + ": duplicate patient ID '" + id + "'");
    m.patient_ids.push_back(std::move(id));
    for (std::size_t c = 1; c < ncols; ++c) {
      if (l.fields[c].empty()) {
        values.push_back(0.0);
        m.present.push_back(0);
      } else {
        values.push_back(parse_number(l.fields[c], source, l.number));
        m.present.push_back(1);
      }
    }
  }
  m.values = Tensor2(m.patient_ids.size(), G, std::move(values));
  m.validate();
  return m;
}

genomics::GeneMatrix read_gene_csv(const fs::path& path) { return parse_gene_csv(read_text(path), path.string()); }

std::string format_gene_csv(const genomics::GeneMatrix& m) {
  m.validate();
  std::string out = "patient_id";
  for (const auto& g : m.gene_ids) out += ',' + g;
  out += '\n';
  for (std::size_t p = 0; p < m.patients(); ++p) {
    out += m.patient_ids[p];
    for (std::size_t g = 0; g < m.genes(); ++g) {
      out += ',';
      if (m.is_present(p, g)) out += format_double(m.values(p, g));
    }
    out += '\n';
  }
  return out;
}

void write_gene_csv(const genomics::GeneMatrix& m, const fs::path& path) { write_text(path, format_gene_csv(m)); }

genomics::LabelMap parse_labels_csv(std::string_view text, const std::string& source) {
  const auto lines = split_csv(text, source);
  const auto& h = lines.front();
  if (h.fields.size() != 2 || h.fields[0] != "patient_id") {
    throw FormatError(where(source, 1) + ": header must be 'patient_id,<label column>'");
  }
  genomics::LabelMap out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    expect_fields(l, 2, source);
    const std::string id(l.fields[0]);
    const auto label = genomics::label_from_subtype(std::string(l.fields[1]));
    if (!label) throw FormatError(where(source, l.number) + ": unknown label '" + std::string(l.fields[1]) + "'");
    if (id.empty()) throw FormatError(where(source, l.number) + ": empty patient ID");
    if (!out.emplace(id, *label).second) throw FormatError(where(source, l.number) + ": duplicate patient ID '" + id + "'");
  }
  return out;
}

genomics::LabelMap read_labels_csv(const fs::path& path) { return parse_labels_csv(read_text(path), path.string()); }

void write_labels_csv(const genomics::LabelMap& labels, const fs::path& path) {
  std::string out = "patient_id,label\n";
  for (const auto& [id, y] : labels) out += id + ',' + std::to_string(y) + '\n';
  write_text(path, out);
}

PredictionTable parse_predictions_csv(std::string_view text, const std::string& source) {
  const auto lines = split_csv(text, source);
  const auto& h = lines.front();
  std::ptrdiff_t id_col = -1, label_col = -1, prob_col = -1;
  for (std::size_t c = 0; c < h.fields.size(); ++c) {
    if (h.fields[c] == "patient_id") id_col = static_cast<std::ptrdiff_t>(c);
    if (h.fields[c] == "label") label_col = static_cast<std::ptrdiff_t>(c);
    if (h.fields[c] == "probability") prob_col = static_cast<std::ptrdiff_t>(c);
  }
  if (label_col < 0 || prob_col < 0) {
    throw FormatError(where(source, 1) + ": header needs 'label' and 'probability' columns");
  }
  PredictionTable t;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    expect_fields(l, h.fields.size(), source);
    const auto lf = l.fields[static_cast<std::size_t>(label_col)];
    if (lf != "0" && lf != "1") throw FormatError(where(source, l.number) + ": label must be 0 or 1");
    const double p = parse_number(l.fields[static_cast<std::size_t>(prob_col)], source, l.number);
    if (p < 0.0 || p > 1.0) throw FormatError(where(source, l.number) + ": probability outside [0, 1]");
    t.labels.push_back(lf == "1" ? 1 : 0);
    t.probabilities.push_back(p);
    if (id_col >= 0) t.patient_ids.emplace_back(l.fields[static_cast<std::size_t>(id_col)]);
  }
  if (t.labels.empty()) throw FormatError(source + ": no prediction rows");
  return t;
}

PredictionTable read_predictions_csv(const fs::path& path) {
  return parse_predictions_csv(read_text(path), path.string());
}

// --- PFM1 -------------------------------------------------------------------

namespace {
constexpr char kPfmMagic[4] = {'P', 'F', 'M', '1'};
}

std::vector<std::uint8_t> encode_pfm(const model::PatchFeatureMatrix& m) {
  if (m.patient_id.size() > UINT16_MAX) throw PfmError(PfmError::Kind::invalid, "PFM1: patient ID too long");
  if (m.features.rows() > UINT32_MAX || m.features.cols() > UINT32_MAX)
    throw PfmError(PfmError::Kind::invalid, "PFM1: matrix too large");
  detail::ByteWriter w;
  w.raw(kPfmMagic, 4);
  w.le<std::uint16_t>(static_cast<std::uint16_t>(m.patient_id.size()));
  w.raw(m.patient_id.data(), m.patient_id.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(m.features.rows()));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(m.features.cols()));
  for (double v : m.features.values()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) {
      throw PfmError(PfmError::Kind::non_finite, "PFM1: non-finite feature value for '" + m.patient_id + "'");
    }
    w.le<float>(f);
  }
  return w.take();
}

model::PatchFeatureMatrix decode_pfm(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 4 || !std::equal(kPfmMagic, kPfmMagic + 4, bytes.begin())) {
    throw PfmError(PfmError::Kind::bad_magic, source + ": bad magic (expected PFM1)");
  }
  model::PatchFeatureMatrix m;
  std::uint32_t rows = 0, cols = 0;
  detail::ByteReader r(bytes.subspan(4), source);
  try {
    const auto id_len = r.le<std::uint16_t>();
    const auto id = r.take(id_len);
    m.patient_id.assign(id.begin(), id.end());
    rows = r.le<std::uint32_t>();
    cols = r.le<std::uint32_t>();
  } catch (const FormatError&) {
    throw PfmError(PfmError::Kind::truncated, source + ": truncated header");
  }
  const std::uint64_t expected = static_cast<std::uint64_t>(rows) * cols;
  const std::uint64_t got = r.remaining() / sizeof(float);
  if (got < expected) {
    throw PfmError(PfmError::Kind::truncated, source + ": expected " + std::to_string(expected) +
                                                  " floats (" + std::to_string(expected * sizeof(float)) +
                                                  " bytes), got " + std::to_string(got));
  }
  if (r.remaining() != expected * sizeof(float)) {
    throw PfmError(PfmError::Kind::trailing_bytes,
                   source + ": " + std::to_string(r.remaining() - expected * sizeof(float)) +
                       " trailing bytes after " + std::to_string(expected) + " floats");
  }
  m.features = Tensor2(rows, cols);
  auto out = m.features.values();
  for (std::uint64_t i = 0; i < expected; ++i) {
    const float f = r.le<float>();
    if (!std::isfinite(f)) {
      throw PfmError(PfmError::Kind::non_finite, source + ": non-finite value at row " +
                                                     std::to_string(i / cols) + ", column " +
                                                     std::to_string(i % cols));
    }
    out[i] = f;
  }
  return m;
}

void write_feature_matrix(const model::PatchFeatureMatrix& m, const fs::path& path) {
  write_bytes(path, encode_pfm(m));
}

model::PatchFeatureMatrix read_feature_matrix(const fs::path& path) {
  return decode_pfm(read_bytes(path), path.string());
}

// --- bundles ----------------------------------------------------------------

namespace {

void check_file_id(const std::string& id) {
  const bool ok = !id.empty() && id.front() != '.' &&
                  std::all_of(id.begin(), id.end(), [](unsigned char c) {
                    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
                  });
  if (!ok) throw DataError("patient ID '" + id + "' cannot be used as a file name");
}

}  // namespace

void write_bundle(const DatasetBundle& b, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "features", ec);
  if (ec) throw FormatError("cannot create '" + (dir / "features").string() + "': " + ec.message());
  write_gene_csv(b.genes, dir / "genes.csv");
  write_labels_csv(b.labels, dir / "labels.csv");
  nlohmann::json patients = nlohmann::json::array();
  for (const auto& [id, fm] : b.features) {
    check_file_id(id);
    if (fm.patient_id != id) throw DataError("feature matrix keyed '" + id + "' carries ID '" + fm.patient_id + "'");
    write_feature_matrix(fm, dir / "features" / (id + ".pfm"));
    patients.push_back(id);
  }
  nlohmann::json j;
  j["format"] = "fusilade-bundle";
  j["format_version"] = kBundleFormatVersion;
  j["feature_patients"] = patients;
  j["provenance"] = b.provenance;
  write_text(dir / "bundle.json", detail::canonical_dump(j) + "\n");
}

DatasetBundle read_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("bundle directory '" + dir.string() + "' does not exist");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(dir / "bundle.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "bundle.json").string() + ": " + e.what());
  }
  if (j.value("format", "") != "fusilade-bundle") throw FormatError((dir / "bundle.json").string() + ": not a bundle manifest");
  if (j.value("format_version", 0) != kBundleFormatVersion) {
    throw FormatError((dir / "bundle.json").string() + ": unsupported format_version");
  }
  DatasetBundle b;
  b.genes = read_gene_csv(dir / "genes.csv");
  b.labels = read_labels_csv(dir / "labels.csv");
  try {
    b.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    for (const auto& id_json : j.at("feature_patients")) {
      const auto id = id_json.get<std::string>();
      check_file_id(id);
      auto fm = read_feature_matrix(dir / "features" / (id + ".pfm"));
      if (fm.patient_id != id) {
        throw FormatError((dir / "features" / (id + ".pfm")).string() + ": carries patient ID '" + fm.patient_id + "'");
      }
      b.features.emplace(id, std::move(fm));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "bundle.json").string() + ": " + e.what());
  }
  return b;
}

train::Cohort to_cohort(const DatasetBundle& b) {
  std::set<std::string> with_images;
  for (const auto& [id, fm] : b.features)
    if (fm.features.rows() > 0) with_images.insert(id);
  auto aligned = genomics::align_and_label(b.genes, with_images, b.labels);
  train::Cohort c;
  c.labels = std::move(aligned.labels);
  for (const auto& id : aligned.matrix.patient_ids) {
    const auto& f = b.features.at(id).features;
    if (!c.patches.empty() && f.cols() != c.patches.front().cols()) {
      throw DataError("patient '" + id + "' has " + std::to_string(f.cols()) + "-dim patch features, expected " +
                      std::to_string(c.patches.front().cols()));
    }
    c.patches.push_back(f);
  }
  c.genes = std::move(aligned.matrix);
  return c;
}

// --- synthetic cohort -------------------------------------------------------

void SynthOptions::validate() const {
  if (n_patients < 20) throw ConfigError("synth: n_patients must be >= 20");
  if (genes == 0 || patches == 0 || dims < 2) throw ConfigError("synth: genes, patches must be >= 1 and dims >= 2");
  for (auto [name, v] : {std::pair{"gene_snr", gene_snr}, {"image_snr", image_snr}, {"image_scale", image_scale},
                         {"marker", marker}, {"distractor", distractor},
                         {"gene_latent_noise", gene_latent_noise}, {"image_latent_noise", image_latent_noise}}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("synth: ") + name + " must be finite and >= 0");
  }
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("synth: overlap must lie in [0, 1]");
  if (!(informative_fraction > 0.0 && informative_fraction <= 1.0))
    throw ConfigError("synth: informative_fraction must lie in (0, 1]");
}

namespace {

std::vector<double> unit_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  for (auto& x : v) x /= std::sqrt(norm);
  return v;
}

std::string id_with_width(char prefix, std::size_t i, std::size_t count) {
  const auto width = std::to_string(count).size();
  std::string digits = std::to_string(i + 1);
  return std::string(1, prefix) + std::string(width - std::min(width, digits.size()), '0') + digits;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

DatasetBundle generate_synthetic(const SynthOptions& o) {
  o.validate();
  Rng rng(o.seed);
  const auto a = unit_vector(rng, o.genes);
  const auto b = unit_vector(rng, o.dims);
  auto c = unit_vector(rng, o.dims);
  double dot = 0.0;
  for (std::size_t i = 0; i < o.dims; ++i) dot += c[i] * b[i];
  double norm = 0.0;
  for (std::size_t i = 0; i < o.dims; ++i) {
    c[i] -= dot * b[i];
    norm += c[i] * c[i];
  }
  for (auto& x : c) x /= std::sqrt(norm);

  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(o.informative_fraction * static_cast<double>(o.patches))));

  DatasetBundle out;
  std::vector<std::string> gene_ids;
  for (std::size_t g = 0; g < o.genes; ++g) gene_ids.push_back(id_with_width('G', g, o.genes));
  std::vector<std::string> patient_ids;
  Tensor2 expr(o.n_patients, o.genes);
  std::vector<std::size_t> order(o.patches);

  for (std::size_t p = 0; p < o.n_patients; ++p) {
    const std::string id = id_with_width('P', p, o.n_patients);
    patient_ids.push_back(id);
    const int y = rng.uniform() < 0.5 ? 1 : 0;
    const double s = 2.0 * y - 1.0;
    const double u = s + o.gene_latent_noise * rng.normal();
    const double v = s + o.image_latent_noise * rng.normal();
    for (std::size_t g = 0; g < o.genes; ++g) expr(p, g) = std::exp(8.0 + o.gene_snr * u * a[g] + rng.normal());

    Tensor2 f(o.patches, o.dims);
    for (auto& x : f.values()) x = rng.normal();
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    const double signal = o.image_snr * o.image_scale * (o.overlap * u + (1.0 - o.overlap) * v);
    for (std::size_t j = 0; j < o.patches; ++j) {
      auto row = f.row(order[j]);
      if (j < k) {
        for (std::size_t d = 0; d < o.dims; ++d) row[d] += signal * b[d] + o.marker * c[d];
      } else {
        const double z = o.distractor * rng.normal();
        for (std::size_t d = 0; d < o.dims; ++d) row[d] += z * b[d];
      }
    }
    for (auto& x : f.values()) x = static_cast<float>(x);  // stored as f32 on disk
    out.features.emplace(id, model::PatchFeatureMatrix{id, std::move(f)});
    out.labels.emplace(id, y);
  }
  out.genes = genomics::GeneMatrix(std::move(patient_ids), std::move(gene_ids), std::move(expr));
  out.provenance = {
      {"source", "synthetic"},
      {"seed", std::to_string(o.seed)},
      {"n_patients", std::to_string(o.n_patients)},
      {"genes", std::to_string(o.genes)},
      {"patches", std::to_string(o.patches)},
      {"dims", std::to_string(o.dims)},
      {"gene_snr", fmt(o.gene_snr)},
      {"image_snr", fmt(o.image_snr)},
      {"overlap", fmt(o.overlap)},
      {"informative_fraction", fmt(o.informative_fraction)},
      {"image_scale", fmt(o.image_scale)},
      {"marker", fmt(o.marker)},
      {"distractor", fmt(o.distractor)},
      {"gene_latent_noise", fmt(o.gene_latent_noise)},
      {"image_latent_noise", fmt(o.image_latent_noise)},
  };
  return out;
}

}  // namespace fusilade::io
