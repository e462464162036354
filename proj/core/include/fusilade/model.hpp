#pragma once

// Two-pathway classifier. The gene pathway encodes an expression profile,
// the image pathway encodes a patient's patch-embedding matrix, and a fusion
// block turns both into one probability for the positive (Basal/Her2) class.
//
//   gene_only        gene encoder -> gene head
//   image_only       mean-pool patches -> image encoder -> image head
//   concat           [image emb | gene emb] -> head
//   late             (gene_only prob + image_only prob) / 2
//   cross_attention  gene emb queries the encoded (un-pooled) patches;
//                    [attended | gene emb] -> head

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusilade/nn.hpp"
#include "fusilade/tensor.hpp"

namespace fusilade::model {

struct PatchFeatureMatrix {
  std::string patient_id;
  Tensor2 features;  // P patches x D dims
};

enum class Strategy { gene_only, image_only, concat, late, cross_attention };

std::string_view to_string(Strategy s) noexcept;
/// Throws ConfigError on an unknown name.
Strategy parse_strategy(std::string_view name);
inline constexpr Strategy kAllStrategies[] = {Strategy::cross_attention, Strategy::concat,
                                              Strategy::gene_only, Strategy::image_only,
                                              Strategy::late};

struct ModelDims {
  std::size_t gene_dim = 0;
  std::size_t feature_dim = 0;
  std::size_t hidden = 512;
  std::size_t embed = 128;
  std::size_t heads = 4;
  std::size_t head_dim = 32;
  bool bidirectional = false;  // cross_attention only: patches also query the gene token

  std::size_t model_dim() const noexcept { return heads * head_dim; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct FusionModel {
  Strategy strategy = Strategy::concat;
  ModelDims dims;
  std::vector<nn::LayerParams> gene_encoder;   // gene_dim -> hidden -> embed
  std::vector<nn::LayerParams> image_encoder;  // feature_dim -> hidden -> embed
  std::optional<nn::AttentionParams> attention;
  std::optional<nn::AttentionParams> reverse_attention;
  nn::LayerParams head;        // fused -> 1 (concat, cross_attention)
  nn::LayerParams gene_head;   // embed -> 1 (gene_only, late)
  nn::LayerParams image_head;  // embed -> 1 (image_only, late)

  bool uses_genes() const noexcept { return strategy != Strategy::image_only; }
  bool uses_images() const noexcept { return strategy != Strategy::gene_only; }

  /// Active parameter blocks in declaration order (checkpoint order).
  std::vector<nn::LayerParams*> parameters();
  std::vector<const nn::LayerParams*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

/// Width of the vector fed to `head` for the given strategy.
std::size_t fusion_width(Strategy s, const ModelDims& dims);

/// Glorot-initialised model; throws ConfigError on invalid dims.
FusionModel make_model(Strategy strategy, const ModelDims& dims, std::uint64_t seed);

/// One patient's inputs. Either modality may be absent when the strategy does
/// not need it.
struct PatientView {
  std::string_view patient_id;
  std::span<const double> genes;
  const Tensor2* patches = nullptr;
};

struct EncoderTape {
  Tensor2 input;
  Tensor2 hidden;
  Tensor2 out;
};

struct ModelTape {
  bool valid = false;
  std::size_t batch = 0;
  EncoderTape gene;
  EncoderTape image;
  std::vector<std::size_t> patch_offsets;  // cross_attention: first row of each patient
  std::vector<nn::AttentionTape> attention;
  std::vector<nn::AttentionTape> reverse_attention;
  Tensor2 fused;
  Tensor2 prob;        // B x 1, final
  Tensor2 gene_prob;   // B x 1, gene head (gene_only / late)
  Tensor2 image_prob;  // B x 1, image head (image_only / late)
};

struct Prediction {
  std::vector<double> probability;
  std::vector<double> gene_probability;   // late only
  std::vector<double> image_probability;  // late only
  /// cross_attention: per patient, per head, the P attention weights.
  std::vector<std::vector<std::vector<double>>> attention;
};

/// Full forward path for a batch. Throws DataError naming the patient and the
/// missing modality, ShapeError on dimension mismatch.
Prediction forward(const FusionModel& m, std::span<const PatientView> batch,
                   ModelTape* tape = nullptr);

struct OutputGrads {
  std::vector<double> probability;
  std::vector<double> gene_probability;   // late: unimodal head gradients
  std::vector<double> image_probability;
};

/// Accumulates parameter gradients. Throws StateError without a recorded forward.
void backward(FusionModel& m, const ModelTape& tape, const OutputGrads& grads);

/// Training objective: BCE of the output probability, or for late fusion the
/// mean of the two unimodal heads' BCE (the two pathways train independently).
double objective(const FusionModel& m, const Prediction& pred, std::span<const double> labels);

/// Forward + backward of `objective`, accumulating into the parameter grads.
double objective_and_gradients(FusionModel& m, std::span<const PatientView> batch,
                               std::span<const double> labels);

Prediction predict(const FusionModel& m, std::span<const PatientView> batch);

// --- checkpoint -------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "FUSM", u32 version, u32 strategy, dims, u64 parameter count, then every
/// parameter block (weights row-major, then bias) as little-endian f64.
std::vector<std::uint8_t> encode_checkpoint(const FusionModel& m);
FusionModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const FusionModel& m, const std::filesystem::path& path);
FusionModel load_checkpoint(const std::filesystem::path& path);

}  // namespace fusilade::model
