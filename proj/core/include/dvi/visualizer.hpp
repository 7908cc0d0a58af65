#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dvi/complex.hpp"
#include "dvi/matrix.hpp"
#include "dvi/mlp.hpp"
#include "dvi/optimizer.hpp"
#include "dvi/subject.hpp"

namespace dvi {

/// Low-dimensional similarity q = 1 / (1 + a * d^(2b)).
struct CurveParams {
  double a = 1.93;
  double b = 0.79;
};

struct LossWeights {
  double projection = 1.0;
  double reconstruction = 1.0;
  double temporal = 0.3;
  double beta = 1.0;
  /// Neighbor count for the eval_sem weights of the temporal term.
  std::size_t k = 15;
};

/// Encoder h -> h/2 (x4) -> 2 and decoder 2 -> h/2 (x4) -> h, ReLU hidden
/// layers with linear outputs.
struct VisualizationModel {
  int epoch = 1;
  Mlp encoder;
  Mlp decoder;
  CurveParams curve;

  std::size_t rep_dim() const { return encoder.in_dim(); }
  void validate() const;
  bool operator==(const VisualizationModel& o) const {
    return epoch == o.epoch && encoder == o.encoder && decoder == o.decoder &&
           curve.a == o.curve.a && curve.b == o.curve.b;
  }
};

VisualizationModel make_visualization_model(std::size_t rep_dim, int epoch, CurveParams curve,
                                            std::mt19937_64& rng);

template <typename T>
struct LossValue {
  T value = T(0);
  BasicMlp<T> encoder_grad;
  BasicMlp<T> decoder_grad;
};

/// Mean binary cross-entropy over the batch between pair targets and q_ij
/// of the encoded vertices. `vertices` holds one row per complex vertex.
/// Only the encoder receives gradients; decoder_grad stays empty.
template <typename T>
LossValue<T> projection_loss(const BasicMatrix<T>& vertices, const PairBatch& batch,
                             const BasicMlp<T>& encoder, CurveParams curve);

/// grad_i = |d g_top1/dx_i| + |d g_top2/dx_i| per entry, top classes taken at x_i.
Matrix head_gradient_weights(const SubjectCheckpoint& ckpt, const Matrix& reps);

/// sum((1 + grad)^beta * (x - psi(phi(x)))^2) / (N * h); `grad` is a constant.
template <typename T>
LossValue<T> reconstruction_loss(const BasicMatrix<T>& reps, const BasicMatrix<T>& grad,
                                 const BasicMlp<T>& encoder, const BasicMlp<T>& decoder,
                                 double beta);

/// mean(sem) * ||W - W_prev||^2 over all encoder and decoder parameters.
template <typename T>
LossValue<T> temporal_loss(const BasicMlp<T>& encoder, const BasicMlp<T>& decoder,
                           const BasicMlp<T>& prev_encoder, const BasicMlp<T>& prev_decoder,
                           double mean_sem);

struct VisualizerParams {
  LossWeights weights;
  CurveParams curve;
  LrSchedule schedule;
  double momentum = 0.9;
  int epochs = 40;
  std::size_t batch_positives = 256;
  std::size_t negative_rate = 5;
  std::size_t k = 15;
  bool no_temporal = false;
  bool no_boundary = false;
  bool no_reconstruction = false;
  /// Boundary rows join the reconstruction term alongside the data rows.
  bool reconstruct_boundary = true;
  /// Start epoch t > 1 from the trained epoch t - 1 model.
  bool transfer = true;
};

enum class Variant : std::uint8_t { dvi, dvi_t, umap_t };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);
/// DVI-T drops the temporal term; UMAP-T additionally drops reconstruction
/// and boundary points. Both keep transfer initialization.
VisualizerParams apply_variant(VisualizerParams params, Variant v);

struct FitEpochInput {
  const SubjectCheckpoint* ckpt = nullptr;
  const Matrix* data = nullptr;      ///< N x h training representations
  const Matrix* boundary = nullptr;  ///< |B| x h, may be empty
  const BavrComplex* complex = nullptr;
  const VisualizationModel* previous = nullptr;
  /// mean eval_sem against the previous epoch's representations.
  double mean_sem = 0.0;
  int epoch = 1;
};

struct FitResult {
  VisualizationModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;  ///< mean batch loss per optimizer epoch
};

/// Trains one model under l1 * L_proj + l2 * L_rec + l3 * [t > 1] * L_temp.
/// Throws TrainingError naming epoch and batch on a non-finite loss.
FitResult fit_epoch(const FitEpochInput& input, const VisualizerParams& params,
                    std::uint64_t seed);

struct SequenceEpoch {
  const SubjectCheckpoint* ckpt = nullptr;
  Matrix data;
  Matrix boundary;
  /// Prebuilt weighted complex over (data, boundary); built on demand when null.
  /// Ignored when the parameters drop boundary points.
  const BavrComplex* complex = nullptr;
};

/// Chronological fit with a fresh complex per epoch and transfer from t - 1.
std::vector<FitResult> fit_sequence(std::span<const SequenceEpoch> epochs,
                                    const VisualizerParams& params, std::uint64_t seed);

Matrix project(const VisualizationModel& model, const Matrix& reps);
Matrix inverse_project(const VisualizationModel& model, const Matrix& points);

/// `stem`.bin (encoder then decoder, flat little-endian f32) plus `stem`.json.
void save_visualization_model(const std::filesystem::path& stem, const VisualizationModel& model);
VisualizationModel load_visualization_model(const std::filesystem::path& stem);

}  // namespace dvi
