#include "fusilade/model.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "binary.hpp"
#include "fusilade/errors.hpp"

namespace fusilade::model {

using nn::Activation;
using nn::LayerParams;

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::gene_only: return "gene_only";
    case Strategy::image_only: return "image_only";
    case Strategy::concat: return "concat";
    case Strategy::late: return "late";
    case Strategy::cross_attention: return "cross_attention";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : kAllStrategies)
    if (to_string(s) == name) return s;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected gene_only, image_only, concat, late or cross_attention)");
}

std::vector<LayerParams*> FusionModel::parameters() {
  std::vector<LayerParams*> out;
  for (auto& l : gene_encoder) out.push_back(&l);
  for (auto& l : image_encoder) out.push_back(&l);
  for (auto* a : {&attention, &reverse_attention}) {
    if (!a->has_value()) continue;
    auto& at = **a;
    for (auto* l : {&at.w_query, &at.w_key, &at.w_value, &at.w_output}) out.push_back(l);
  }
  for (auto* l : {&head, &gene_head, &image_head})
    if (!l->empty()) out.push_back(l);
  return out;
}

std::vector<const LayerParams*> FusionModel::parameters() const {
  auto mut = const_cast<FusionModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t FusionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->parameter_count();
  return n;
}

void FusionModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::size_t fusion_width(Strategy s, const ModelDims& d) {
  switch (s) {
    case Strategy::concat: return 2 * d.embed;
    case Strategy::cross_attention: return d.model_dim() + d.embed + (d.bidirectional ? d.model_dim() : 0);
    default: return 0;
  }
}

FusionModel make_model(Strategy strategy, const ModelDims& dims, std::uint64_t seed) {
  if (dims.hidden == 0 || dims.embed == 0) throw ConfigError("model: hidden and embed must be > 0");
  FusionModel m;
  m.strategy = strategy;
  m.dims = dims;
  if (m.uses_genes() && dims.gene_dim == 0) throw ConfigError("model: gene_dim must be > 0");
  if (m.uses_images() && dims.feature_dim == 0) throw ConfigError("model: feature_dim must be > 0");
  if (strategy == Strategy::cross_attention && (dims.heads == 0 || dims.head_dim == 0)) {
    throw ConfigError("model: cross_attention needs heads > 0 and head_dim > 0");
  }
  if (dims.bidirectional && strategy != Strategy::cross_attention) {
    throw ConfigError("model: bidirectional attention applies to cross_attention only");
  }

  Rng rng(seed);
  if (m.uses_genes()) {
    m.gene_encoder.push_back(nn::glorot_uniform(dims.gene_dim, dims.hidden, rng));
    m.gene_encoder.push_back(nn::glorot_uniform(dims.hidden, dims.embed, rng));
  }
  if (m.uses_images()) {
    m.image_encoder.push_back(nn::glorot_uniform(dims.feature_dim, dims.hidden, rng));
    m.image_encoder.push_back(nn::glorot_uniform(dims.hidden, dims.embed, rng));
  }
  if (strategy == Strategy::cross_attention) {
    m.attention = nn::make_attention(dims.embed, dims.embed, dims.heads, dims.head_dim, rng);
    if (dims.bidirectional)
      m.reverse_attention = nn::make_attention(dims.embed, dims.embed, dims.heads, dims.head_dim, rng);
  }
  switch (strategy) {
    case Strategy::concat:
    case Strategy::cross_attention:
      m.head = nn::glorot_uniform(fusion_width(strategy, dims), 1, rng);
      break;
    case Strategy::gene_only:
      m.gene_head = nn::glorot_uniform(dims.embed, 1, rng);
      break;
    case Strategy::image_only:
      m.image_head = nn::glorot_uniform(dims.embed, 1, rng);
      break;
    case Strategy::late:
      m.gene_head = nn::glorot_uniform(dims.embed, 1, rng);
      m.image_head = nn::glorot_uniform(dims.embed, 1, rng);
      break;
  }
  return m;
}

// --- forward ----------------------------------------------------------------

namespace {

Tensor2 encode(const std::vector<LayerParams>& layers, Tensor2 input, EncoderTape& tape) {
  tape.hidden = nn::activation_forward(nn::dense_forward(input, layers[0]), Activation::relu);
  tape.out = nn::activation_forward(nn::dense_forward(tape.hidden, layers[1]), Activation::relu);
  tape.input = std::move(input);
  return tape.out;
}

void encode_backward(std::vector<LayerParams>& layers, const EncoderTape& tape, const Tensor2& grad_out) {
  const Tensor2 g2 = nn::activation_backward(tape.out, Activation::relu, grad_out);
  const Tensor2 g1 = nn::dense_backward(tape.hidden, layers[1], g2);
  const Tensor2 g1r = nn::activation_backward(tape.hidden, Activation::relu, g1);
  nn::dense_backward(tape.input, layers[0], g1r, /*need_input_grad=*/false);
}

Tensor2 sigmoid_head(const LayerParams& head, const Tensor2& x) {
  return nn::activation_forward(nn::dense_forward(x, head), Activation::sigmoid);
}

std::string missing(std::string_view id, const char* modality) {
  return "patient '" + std::string(id) + "' is missing " + modality;
}

Tensor2 stack_genes(const FusionModel& m, std::span<const PatientView> batch) {
  Tensor2 x(batch.size(), m.dims.gene_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& pv = batch[i];
    if (pv.genes.empty()) throw DataError(missing(pv.patient_id, "gene expression"));
    if (pv.genes.size() != m.dims.gene_dim) {
      throw ShapeError("patient '" + std::string(pv.patient_id) + "': " +
                       std::to_string(pv.genes.size()) + " genes, model expects " +
                       std::to_string(m.dims.gene_dim));
    }
    std::copy(pv.genes.begin(), pv.genes.end(), x.row(i).begin());
  }
  return x;
}

void check_patches(const FusionModel& m, const PatientView& pv) {
  if (pv.patches == nullptr || pv.patches->rows() == 0)
    throw DataError(missing(pv.patient_id, "patch features"));
  if (pv.patches->cols() != m.dims.feature_dim) {
    throw ShapeError("patient '" + std::string(pv.patient_id) + "': patch features " +
                     pv.patches->shape_str() + ", model expects " +
                     std::to_string(m.dims.feature_dim) + " dims");
  }
}

Tensor2 pooled_patches(const FusionModel& m, std::span<const PatientView> batch) {
  Tensor2 x(batch.size(), m.dims.feature_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    check_patches(m, batch[i]);
    const Tensor2 mean = column_mean(*batch[i].patches);
    std::copy(mean.values().begin(), mean.values().end(), x.row(i).begin());
  }
  return x;
}

Tensor2 stacked_patches(const FusionModel& m, std::span<const PatientView> batch,
                        std::vector<std::size_t>& offsets) {
  std::size_t total = 0;
  offsets.clear();
  for (const auto& pv : batch) {
    check_patches(m, pv);
    offsets.push_back(total);
    total += pv.patches->rows();
  }
  offsets.push_back(total);
  Tensor2 x(total, m.dims.feature_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto src = batch[i].patches->values();
    std::copy(src.begin(), src.end(), x.row(offsets[i]).begin());
  }
  return x;
}

std::vector<double> column0(const Tensor2& t) {
  std::vector<double> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i] = t(i, 0);
  return out;
}

Tensor2 as_column(const std::vector<double>& v) { return Tensor2(v.size(), 1, v); }

}  // namespace

Prediction forward(const FusionModel& m, std::span<const PatientView> batch, ModelTape* tape_out) {
  ModelTape local;
  ModelTape& tape = tape_out != nullptr ? *tape_out : local;
  tape = ModelTape{};
  tape.batch = batch.size();
  Prediction pred;
  if (batch.empty()) {
    tape.valid = true;
    return pred;
  }

  Tensor2 e_gene, e_img;
  if (m.uses_genes()) e_gene = encode(m.gene_encoder, stack_genes(m, batch), tape.gene);
  if (m.uses_images()) {
    Tensor2 x = m.strategy == Strategy::cross_attention ? stacked_patches(m, batch, tape.patch_offsets)
                                                        : pooled_patches(m, batch);
    e_img = encode(m.image_encoder, std::move(x), tape.image);
  }

  switch (m.strategy) {
    case Strategy::gene_only:
      tape.gene_prob = sigmoid_head(m.gene_head, e_gene);
      tape.prob = tape.gene_prob;
      break;
    case Strategy::image_only:
      tape.image_prob = sigmoid_head(m.image_head, e_img);
      tape.prob = tape.image_prob;
      break;
    case Strategy::late: {
      tape.gene_prob = sigmoid_head(m.gene_head, e_gene);
      tape.image_prob = sigmoid_head(m.image_head, e_img);
      tape.prob = Tensor2(batch.size(), 1);
      for (std::size_t i = 0; i < batch.size(); ++i)
        tape.prob(i, 0) = 0.5 * (tape.gene_prob(i, 0) + tape.image_prob(i, 0));
      pred.gene_probability = column0(tape.gene_prob);
      pred.image_probability = column0(tape.image_prob);
      break;
    }
    case Strategy::concat:
      tape.fused = hconcat(e_img, e_gene);
      tape.prob = sigmoid_head(m.head, tape.fused);
      break;
    case Strategy::cross_attention: {
      if (!m.attention) throw ConfigError("cross_attention model has no attention parameters");
      if (m.dims.bidirectional && !m.reverse_attention)
        throw ConfigError("bidirectional model has no reverse attention parameters");
      const std::size_t md = m.dims.model_dim();
      tape.fused = Tensor2(batch.size(), fusion_width(m.strategy, m.dims));
      tape.attention.resize(batch.size());
      if (m.dims.bidirectional) tape.reverse_attention.resize(batch.size());
      pred.attention.resize(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const std::size_t first = tape.patch_offsets[b];
        const std::size_t count = tape.patch_offsets[b + 1] - first;
        const Tensor2 patches = e_img.slice_rows(first, count);
        const Tensor2 query = e_gene.slice_rows(b, 1);
        const Tensor2 attended = nn::attention_forward(query, patches, *m.attention, &tape.attention[b]);
        auto row = tape.fused.row(b);
        std::copy(attended.values().begin(), attended.values().end(), row.begin());
        std::copy(query.values().begin(), query.values().end(), row.begin() + static_cast<std::ptrdiff_t>(md));
        if (m.dims.bidirectional) {
          const Tensor2 rev = nn::attention_forward(patches, query, *m.reverse_attention,
                                                    &tape.reverse_attention[b]);
          const Tensor2 pooled = column_mean(rev);
          std::copy(pooled.values().begin(), pooled.values().end(),
                    row.begin() + static_cast<std::ptrdiff_t>(md + m.dims.embed));
        }
        for (const auto& w : tape.attention[b].weights)
          pred.attention[b].emplace_back(w.values().begin(), w.values().end());
      }
      tape.prob = sigmoid_head(m.head, tape.fused);
      break;
    }
  }
  pred.probability = column0(tape.prob);
  tape.valid = true;
  return pred;
}

// --- backward ---------------------------------------------------------------

namespace {

/// d/dlogit through the sigmoid head, accumulating head grads; returns d/d(input).
Tensor2 head_backward(LayerParams& head, const Tensor2& input, const Tensor2& prob,
                      const std::vector<double>& grad_prob) {
  const Tensor2 g = nn::activation_backward(prob, Activation::sigmoid, as_column(grad_prob));
  return nn::dense_backward(input, head, g);
}

void add_into(Tensor2& dst, const Tensor2& src) {
  auto d = dst.values();
  const auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

void backward(FusionModel& m, const ModelTape& tape, const OutputGrads& grads) {
  if (!tape.valid) throw StateError("model backward called before forward");
  const std::size_t B = tape.batch;
  if (B == 0) return;
  if (grads.probability.size() != B && !(m.strategy == Strategy::late && grads.probability.empty())) {
    throw ShapeError("backward: " + std::to_string(grads.probability.size()) +
                     " output grads for batch of " + std::to_string(B));
  }

  Tensor2 g_gene, g_img;
  if (m.uses_genes()) g_gene = Tensor2(tape.gene.out.rows(), tape.gene.out.cols());
  if (m.uses_images()) g_img = Tensor2(tape.image.out.rows(), tape.image.out.cols());

  switch (m.strategy) {
    case Strategy::gene_only:
      add_into(g_gene, head_backward(m.gene_head, tape.gene.out, tape.gene_prob, grads.probability));
      break;
    case Strategy::image_only:
      add_into(g_img, head_backward(m.image_head, tape.image.out, tape.image_prob, grads.probability));
      break;
    case Strategy::late: {
      std::vector<double> gg(B, 0.0), gi(B, 0.0);
      for (std::size_t i = 0; i < B; ++i) {
        const double gp = grads.probability.empty() ? 0.0 : grads.probability[i];
        gg[i] = 0.5 * gp + (grads.gene_probability.empty() ? 0.0 : grads.gene_probability.at(i));
        gi[i] = 0.5 * gp + (grads.image_probability.empty() ? 0.0 : grads.image_probability.at(i));
      }
      add_into(g_gene, head_backward(m.gene_head, tape.gene.out, tape.gene_prob, gg));
      add_into(g_img, head_backward(m.image_head, tape.image.out, tape.image_prob, gi));
      break;
    }
    case Strategy::concat: {
      const Tensor2 gf = head_backward(m.head, tape.fused, tape.prob, grads.probability);
      const std::size_t E = m.dims.embed;
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < E; ++j) {
          g_img(i, j) += gf(i, j);
          g_gene(i, j) += gf(i, E + j);
        }
      break;
    }
    case Strategy::cross_attention: {
      const Tensor2 gf = head_backward(m.head, tape.fused, tape.prob, grads.probability);
      const std::size_t md = m.dims.model_dim();
      const std::size_t E = m.dims.embed;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t first = tape.patch_offsets[b];
        const std::size_t count = tape.patch_offsets[b + 1] - first;
        Tensor2 g_att(1, md);
        for (std::size_t j = 0; j < md; ++j) g_att(0, j) = gf(b, j);
        for (std::size_t j = 0; j < E; ++j) g_gene(b, j) += gf(b, md + j);

        const auto ag = nn::attention_backward(tape.attention[b], *m.attention, g_att);
        for (std::size_t j = 0; j < E; ++j) g_gene(b, j) += ag.query(0, j);
        for (std::size_t r = 0; r < count; ++r)
          for (std::size_t j = 0; j < E; ++j) g_img(first + r, j) += ag.context(r, j);

        if (m.dims.bidirectional) {
          Tensor2 g_rev(count, md);
          const double inv = 1.0 / static_cast<double>(count);
          for (std::size_t r = 0; r < count; ++r)
            for (std::size_t j = 0; j < md; ++j) g_rev(r, j) = gf(b, md + E + j) * inv;
          const auto rg = nn::attention_backward(tape.reverse_attention[b], *m.reverse_attention, g_rev);
          for (std::size_t r = 0; r < count; ++r)
            for (std::size_t j = 0; j < E; ++j) g_img(first + r, j) += rg.query(r, j);
          for (std::size_t j = 0; j < E; ++j) g_gene(b, j) += rg.context(0, j);
        }
      }
      break;
    }
  }

  if (m.uses_genes()) encode_backward(m.gene_encoder, tape.gene, g_gene);
  if (m.uses_images()) encode_backward(m.image_encoder, tape.image, g_img);
}

double objective(const FusionModel& m, const Prediction& pred, std::span<const double> labels) {
  if (m.strategy == Strategy::late) {
    return 0.5 * (nn::bce_loss(pred.gene_probability, labels) + nn::bce_loss(pred.image_probability, labels));
  }
  return nn::bce_loss(pred.probability, labels);
}

double objective_and_gradients(FusionModel& m, std::span<const PatientView> batch,
                               std::span<const double> labels) {
  ModelTape tape;
  const Prediction pred = forward(m, batch, &tape);
  const double loss = objective(m, pred, labels);
  OutputGrads g;
  if (m.strategy == Strategy::late) {
    g.gene_probability = nn::bce_grad(pred.gene_probability, labels);
    g.image_probability = nn::bce_grad(pred.image_probability, labels);
    for (auto* v : {&g.gene_probability, &g.image_probability})
      for (auto& x : *v) x *= 0.5;
  } else {
    g.probability = nn::bce_grad(pred.probability, labels);
  }
  backward(m, tape, g);
  return loss;
}

Prediction predict(const FusionModel& m, std::span<const PatientView> batch) {
  return forward(m, batch, nullptr);
}

// --- checkpoint -------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'F', 'U', 'S', 'M'};
}

std::vector<std::uint8_t> encode_checkpoint(const FusionModel& m) {
  detail::ByteWriter w;
  w.raw(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(m.strategy));
  for (std::size_t v : {m.dims.gene_dim, m.dims.feature_dim, m.dims.hidden, m.dims.embed,
                        m.dims.heads, m.dims.head_dim})
    w.le<std::uint64_t>(v);
  w.le<std::uint32_t>(m.dims.bidirectional ? 1 : 0);
  w.le<std::uint64_t>(m.parameter_count());
  for (const auto* p : m.parameters()) {
    for (double v : p->weights.values()) w.le<double>(v);
    for (double v : p->bias) w.le<double>(v);
  }
  return w.take();
}

FusionModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("checkpoint: bad magic (expected FUSM)");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto tag = r.le<std::uint32_t>();
  if (tag > static_cast<std::uint32_t>(Strategy::cross_attention)) {
    throw FormatError("checkpoint: unknown strategy tag " + std::to_string(tag));
  }
  ModelDims d;
  d.gene_dim = r.le<std::uint64_t>();
  d.feature_dim = r.le<std::uint64_t>();
  d.hidden = r.le<std::uint64_t>();
  d.embed = r.le<std::uint64_t>();
  d.heads = r.le<std::uint64_t>();
  d.head_dim = r.le<std::uint64_t>();
  d.bidirectional = r.le<std::uint32_t>() != 0;
  const auto count = r.le<std::uint64_t>();

  FusionModel m = make_model(static_cast<Strategy>(tag), d, 0);
  if (count != m.parameter_count()) {
    throw FormatError("checkpoint: parameter count " + std::to_string(count) +
                      " does not match dims (" + std::to_string(m.parameter_count()) + ")");
  }
  if (r.remaining() != count * sizeof(double)) {
    throw FormatError("checkpoint: expected " + std::to_string(count * sizeof(double)) +
                      " payload bytes, got " + std::to_string(r.remaining()));
  }
  for (auto* p : m.parameters()) {
    for (double& v : p->weights.values()) v = r.le<double>();
    for (double& v : p->bias) v = r.le<double>();
  }
  return m;
}

void save_checkpoint(const FusionModel& m, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

FusionModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace fusilade::model
