#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dvi/dataset.hpp"
#include "dvi/mlp.hpp"

namespace dvi {

/// One epoch of the classifier under study, c = head(feature_net(s)).
struct SubjectCheckpoint {
  int epoch = 1;
  Mlp feature_net;
  Mlp head;
  double train_accuracy = 0.0;

  std::size_t input_dim() const { return feature_net.in_dim(); }
  std::size_t rep_dim() const { return feature_net.out_dim(); }
  std::size_t class_count() const { return head.out_dim(); }

  /// Throws DimensionError if feature_net and head do not compose.
  void validate() const;
};

struct SubjectTrainingParams {
  int epochs = 5;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t rep_dim = 32;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 42;
};

/// Trains d -> hidden... -> rep_dim -> C with cross-entropy and momentum SGD,
/// snapshotting after every epoch. Requires epochs >= 2.
std::vector<SubjectCheckpoint> train_subject(const Dataset& train,
                                             const SubjectTrainingParams& params);

/// Representations f(s) for each input row.
Matrix features(const SubjectCheckpoint& ckpt, const Matrix& inputs);

struct Prediction {
  Matrix logits;
  std::vector<int> top1;
  std::vector<int> top2;
};

/// Head logits g(x) plus top-1/top-2 classes (ties to the lower index).
Prediction predict(const SubjectCheckpoint& ckpt, const Matrix& reps);

/// Full classifier logits g(f(s)).
Matrix classify(const SubjectCheckpoint& ckpt, const Matrix& inputs);

double accuracy(const SubjectCheckpoint& ckpt, const Dataset& data);

/// Writes manifest.json plus one little-endian f32 file per epoch into `dir`.
void write_checkpoints(const std::filesystem::path& dir,
                       const std::vector<SubjectCheckpoint>& checkpoints);

/// Loads a checkpoint dump: sorted by epoch, contiguous, identical shapes.
std::vector<SubjectCheckpoint> ingest_checkpoint_dump(const std::filesystem::path& manifest);

}  // namespace dvi
