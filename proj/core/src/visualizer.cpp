#include "dvi/visualizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dvi/binary_io.hpp"
#include "dvi/json_io.hpp"
#include "dvi/metrics.hpp"

namespace dvi {

namespace {

// Clamp for q inside the cross-entropy logs.
constexpr double kProbEps = 1e-7;
// Keeps pow(d^2, b) differentiable at coincident points.
constexpr double kDistanceEps = 1e-12;

std::vector<std::size_t> encoder_sizes(std::size_t h) {
  const std::size_t half = std::max<std::size_t>(1, h / 2);
  return {h, half, half, half, half, 2};
}

std::vector<std::size_t> decoder_sizes(std::size_t h) {
  const std::size_t half = std::max<std::size_t>(1, h / 2);
  return {2, half, half, half, half, h};
}

/// Unique vertices touched by a batch, with pair endpoints remapped to rows
/// of the gathered vertex block.
struct BatchVertices {
  std::vector<std::size_t> vertices;
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
};

BatchVertices batch_vertices(const PairBatch& batch, std::size_t vertex_count) {
  BatchVertices out;
  std::vector<char> used(vertex_count, 0);
  for (const PairSample& p : batch.pairs) {
    if (p.i >= vertex_count || p.j >= vertex_count) throw ContractError("pair batch: vertex out of range");
    used[p.i] = 1;
    used[p.j] = 1;
  }
  std::vector<std::size_t> local(vertex_count, 0);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (!used[v]) continue;
    local[v] = out.vertices.size();
    out.vertices.push_back(v);
  }
  out.left.reserve(batch.pairs.size());
  out.right.reserve(batch.pairs.size());
  for (const PairSample& p : batch.pairs) {
    out.left.push_back(local[p.i]);
    out.right.push_back(local[p.j]);
  }
  return out;
}

template <typename T>
Var record_projection(Tape<T>& tape, Var embedded, const BatchVertices& bv, const PairBatch& batch,
                      CurveParams curve) {
  BasicMatrix<T> pos(batch.pairs.size(), 1);
  BasicMatrix<T> neg(batch.pairs.size(), 1);
  for (std::size_t p = 0; p < batch.pairs.size(); ++p) {
    pos(p, 0) = static_cast<T>(batch.pairs[p].target);
    neg(p, 0) = T(1) - pos(p, 0);
  }
  const Var diff = tape.sub(tape.gather_rows(embedded, bv.left), tape.gather_rows(embedded, bv.right));
  const Var d2 = tape.add_scalar(tape.row_sum(tape.mul(diff, diff)), static_cast<T>(kDistanceEps));
  const Var denom = tape.add_scalar(tape.scale(tape.pow(d2, static_cast<T>(curve.b)), static_cast<T>(curve.a)), T(1));
  const Var q = tape.clamp(tape.pow(denom, T(-1)), static_cast<T>(kProbEps), static_cast<T>(1.0 - kProbEps));
  const Var log_q = tape.log(q);
  const Var log_not_q = tape.log(tape.add_scalar(tape.scale(q, T(-1)), T(1)));
  const Var ll = tape.add(tape.mul(tape.constant(std::move(pos)), log_q),
                          tape.mul(tape.constant(std::move(neg)), log_not_q));
  return tape.scale(tape.mean(ll), T(-1));
}

template <typename T>
BasicMatrix<T> reconstruction_weights(const BasicMatrix<T>& grad, double beta) {
  BasicMatrix<T> w = grad;
  for (T& v : w.values()) v = static_cast<T>(std::pow(1.0 + static_cast<double>(v), beta));
  return w;
}

template <typename T>
Var record_reconstruction(Tape<T>& tape, Var embedded, const BasicMlp<T>& decoder, const MlpVars& dv,
                          BasicMatrix<T> targets, BasicMatrix<T> weights) {
  const Var recon = forward(tape, decoder, dv, embedded);
  const Var diff = tape.sub(tape.constant(std::move(targets)), recon);
  return tape.mean(tape.mul(tape.mul(diff, diff), tape.constant(std::move(weights))));
}

}  // namespace

void VisualizationModel::validate() const {
  dvi::validate(encoder);
  dvi::validate(decoder);
  if (encoder.out_dim() != 2 || decoder.in_dim() != 2) throw DimensionError("visualizer: embedding must be 2-D");
  if (encoder.in_dim() != decoder.out_dim()) throw DimensionError("visualizer: encoder/decoder widths differ");
  if (!(curve.a > 0.0) || !(curve.b > 0.0)) throw ContractError("visualizer: curve parameters must be positive");
}

VisualizationModel make_visualization_model(std::size_t rep_dim, int epoch, CurveParams curve,
                                            std::mt19937_64& rng) {
  if (rep_dim < 2) throw ContractError("visualizer: representation width must be >= 2");
  VisualizationModel m;
  m.epoch = epoch;
  m.curve = curve;
  m.encoder = make_mlp<float>(encoder_sizes(rep_dim), Activation::relu, Activation::identity, rng,
                              Init::fan_in_uniform);
  m.decoder = make_mlp<float>(decoder_sizes(rep_dim), Activation::relu, Activation::identity, rng,
                              Init::fan_in_uniform);
  return m;
}

template <typename T>
LossValue<T> projection_loss(const BasicMatrix<T>& vertices, const PairBatch& batch,
                             const BasicMlp<T>& encoder, CurveParams curve) {
  if (batch.pairs.empty()) throw ContractError("projection_loss: empty batch");
  const BatchVertices bv = batch_vertices(batch, vertices.rows());
  Tape<T> tape;
  const MlpVars ev = bind(tape, encoder);
  const Var y = forward(tape, encoder, ev, tape.constant(gather_rows(vertices, bv.vertices)));
  const Var loss = record_projection(tape, y, bv, batch, curve);
  tape.backward(loss);
  LossValue<T> out;
  out.value = tape.value(loss)(0, 0);
  out.encoder_grad = collect_gradients(tape, encoder, ev);
  return out;
}

Matrix head_gradient_weights(const SubjectCheckpoint& ckpt, const Matrix& reps) {
  if (reps.cols() != ckpt.rep_dim()) throw DimensionError("head_gradient_weights: width mismatch");
  const Prediction pred = predict(ckpt, reps);
  Matrix out(reps.rows(), reps.cols(), 0.0f);
  for (const std::vector<int>* top : {&pred.top1, &pred.top2}) {
    Matrix mask(reps.rows(), ckpt.class_count(), 0.0f);
    for (std::size_t i = 0; i < reps.rows(); ++i) mask(i, static_cast<std::size_t>((*top)[i])) = 1.0f;
    Tape<float> tape;
    const Var x = tape.parameter(reps);
    const MlpVars hv = bind(tape, ckpt.head);
    const Var logits = forward(tape, ckpt.head, hv, x);
    // Rows are independent, so one backward pass yields every per-row gradient.
    const Var picked = tape.sum(tape.mul(logits, tape.constant(std::move(mask))));
    tape.backward(picked);
    const Matrix g = tape.gradient(x);
    for (std::size_t e = 0; e < g.values().size(); ++e) out.values()[e] += std::abs(g.values()[e]);
  }
  return out;
}

template <typename T>
LossValue<T> reconstruction_loss(const BasicMatrix<T>& reps, const BasicMatrix<T>& grad,
                                 const BasicMlp<T>& encoder, const BasicMlp<T>& decoder,
                                 double beta) {
  if (grad.rows() != reps.rows() || grad.cols() != reps.cols()) {
    throw DimensionError("reconstruction_loss: weight shape mismatch");
  }
  if (reps.rows() == 0) throw ContractError("reconstruction_loss: empty input");
  Tape<T> tape;
  const MlpVars ev = bind(tape, encoder);
  const MlpVars dv = bind(tape, decoder);
  const Var y = forward(tape, encoder, ev, tape.constant(reps));
  const Var loss = record_reconstruction(tape, y, decoder, dv, reps, reconstruction_weights(grad, beta));
  tape.backward(loss);
  LossValue<T> out;
  out.value = tape.value(loss)(0, 0);
  out.encoder_grad = collect_gradients(tape, encoder, ev);
  out.decoder_grad = collect_gradients(tape, decoder, dv);
  return out;
}

template <typename T>
LossValue<T> temporal_loss(const BasicMlp<T>& encoder, const BasicMlp<T>& decoder,
                           const BasicMlp<T>& prev_encoder, const BasicMlp<T>& prev_decoder,
                           double mean_sem) {
  if (encoder.layer_sizes() != prev_encoder.layer_sizes() ||
      decoder.layer_sizes() != prev_decoder.layer_sizes()) {
    throw DimensionError("temporal_loss: previous model has a different shape");
  }
  LossValue<T> out;
  out.encoder_grad = encoder.zeros_like();
  out.decoder_grad = decoder.zeros_like();
  double total = 0.0;
  auto accumulate = [&](const BasicMlp<T>& cur, const BasicMlp<T>& prev, BasicMlp<T>& grad) {
    for (std::size_t l = 0; l < cur.layer_count(); ++l) {
      const std::pair<const BasicMatrix<T>*, const BasicMatrix<T>*> mats[2] = {
          {&cur.weights[l], &prev.weights[l]}, {&cur.biases[l], &prev.biases[l]}};
      BasicMatrix<T>* grads[2] = {&grad.weights[l], &grad.biases[l]};
      for (int m = 0; m < 2; ++m) {
        const auto c = mats[m].first->values();
        const auto p = mats[m].second->values();
        auto g = grads[m]->values();
        for (std::size_t e = 0; e < c.size(); ++e) {
          const double d = static_cast<double>(c[e]) - static_cast<double>(p[e]);
          total += d * d;
          g[e] = static_cast<T>(2.0 * mean_sem * d);
        }
      }
    }
  };
  accumulate(encoder, prev_encoder, out.encoder_grad);
  accumulate(decoder, prev_decoder, out.decoder_grad);
  out.value = static_cast<T>(mean_sem * total);
  return out;
}

template LossValue<float> projection_loss(const Matrix&, const PairBatch&, const Mlp&, CurveParams);
template LossValue<double> projection_loss(const MatrixD&, const PairBatch&, const MlpD&, CurveParams);
template LossValue<float> reconstruction_loss(const Matrix&, const Matrix&, const Mlp&, const Mlp&, double);
template LossValue<double> reconstruction_loss(const MatrixD&, const MatrixD&, const MlpD&, const MlpD&,
                                               double);
template LossValue<float> temporal_loss(const Mlp&, const Mlp&, const Mlp&, const Mlp&, double);
template LossValue<double> temporal_loss(const MlpD&, const MlpD&, const MlpD&, const MlpD&, double);

std::string to_string(Variant v) {
  switch (v) {
    case Variant::dvi: return "DVI";
    case Variant::dvi_t: return "DVI-T";
    case Variant::umap_t: return "UMAP-T";
  }
  return "DVI";
}

Variant variant_from_string(const std::string& name) {
  if (name == "DVI" || name == "dvi") return Variant::dvi;
  if (name == "DVI-T" || name == "dvi-t") return Variant::dvi_t;
  if (name == "UMAP-T" || name == "umap-t") return Variant::umap_t;
  throw ContractError("unknown visualizer variant '" + name + "'");
}

VisualizerParams apply_variant(VisualizerParams params, Variant v) {
  switch (v) {
    case Variant::dvi:
      break;
    case Variant::dvi_t:
      params.no_temporal = true;
      break;
    case Variant::umap_t:
      params.no_temporal = true;
      params.no_reconstruction = true;
      params.no_boundary = true;
      break;
  }
  params.transfer = true;
  return params;
}

namespace {

struct Trainer {
  const VisualizerParams& params;
  const SubjectCheckpoint& ckpt;
  const Matrix& vertices;
  const Matrix& recon_weights;
  std::size_t data_count = 0;
  const VisualizationModel* previous = nullptr;
  double lambda_projection = 0.0;
  double lambda_reconstruction = 0.0;
  double lambda_temporal = 0.0;
  double mean_sem = 0.0;

  struct Step {
    double loss = 0.0;
    std::vector<Mlp> grads;
  };

  Step run(const VisualizationModel& model, const PairBatch& batch, bool want_grads) const {
    const BatchVertices bv = batch_vertices(batch, vertices.rows());
    Tape<float> tape;
    const MlpVars ev = bind(tape, model.encoder);
    const MlpVars dv = bind(tape, model.decoder);
    const Var y = forward(tape, model.encoder, ev, tape.constant(gather_rows(vertices, bv.vertices)));
    Var loss = tape.scale(record_projection(tape, y, bv, batch, model.curve),
                          static_cast<float>(lambda_projection));
    if (lambda_reconstruction > 0.0) {
      std::vector<std::size_t> rows;
      std::vector<std::size_t> source;
      for (std::size_t r = 0; r < bv.vertices.size(); ++r) {
        if (bv.vertices[r] < data_count || params.reconstruct_boundary) {
          rows.push_back(r);
          source.push_back(bv.vertices[r]);
        }
      }
      if (!rows.empty()) {
        const Var sub = tape.gather_rows(y, rows);
        const Var rec = record_reconstruction(tape, sub, model.decoder, dv, gather_rows(vertices, source),
                                              gather_rows(recon_weights, source));
        loss = tape.add(loss, tape.scale(rec, static_cast<float>(lambda_reconstruction)));
      }
    }
    Step out;
    out.loss = tape.value(loss)(0, 0);
    LossValue<float> temporal;
    if (lambda_temporal > 0.0) {
      temporal = temporal_loss(model.encoder, model.decoder, previous->encoder, previous->decoder, mean_sem);
      out.loss += lambda_temporal * static_cast<double>(temporal.value);
    }
    if (!want_grads || !std::isfinite(out.loss)) return out;
    tape.backward(loss);
    out.grads = {collect_gradients(tape, model.encoder, ev), collect_gradients(tape, model.decoder, dv)};
    if (lambda_temporal > 0.0) {
      const auto lt = static_cast<float>(lambda_temporal);
      auto add_scaled = [lt](Mlp& into, const Mlp& extra) {
        for (std::size_t l = 0; l < into.layer_count(); ++l) {
          auto w = into.weights[l].values();
          auto b = into.biases[l].values();
          for (std::size_t e = 0; e < w.size(); ++e) w[e] += lt * extra.weights[l].values()[e];
          for (std::size_t e = 0; e < b.size(); ++e) b[e] += lt * extra.biases[l].values()[e];
        }
      };
      add_scaled(out.grads[0], temporal.encoder_grad);
      add_scaled(out.grads[1], temporal.decoder_grad);
    }
    return out;
  }

  double evaluate(const VisualizationModel& model, const std::vector<PairBatch>& batches) const {
    double total = 0.0;
    for (const PairBatch& b : batches) total += run(model, b, false).loss;
    return batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
  }
};

}  // namespace

FitResult fit_epoch(const FitEpochInput& input, const VisualizerParams& params, std::uint64_t seed) {
  if (!input.ckpt || !input.data || !input.complex) throw ContractError("fit_epoch: missing inputs");
  const Matrix& data = *input.data;
  const Matrix empty;
  const Matrix& boundary = input.boundary ? *input.boundary : empty;
  const BavrComplex& complex = *input.complex;
  if (data.cols() != input.ckpt->rep_dim()) throw DimensionError("fit_epoch: representation width mismatch");
  if (complex.data_count != data.rows()) throw ContractError("fit_epoch: complex built over a different X");
  if (complex.boundary_count != 0 && complex.boundary_count != boundary.rows()) {
    throw ContractError("fit_epoch: complex built over a different B");
  }
  if (params.epochs < 1) throw ContractError("fit_epoch: need at least one optimizer epoch");

  const Matrix vertices = complex.boundary_count > 0 ? vstack(data, boundary) : data;
  const Matrix recon_weights = reconstruction_weights(head_gradient_weights(*input.ckpt, vertices),
                                                      params.weights.beta);

  std::mt19937_64 rng(seed);
  FitResult result;
  const bool has_previous = input.previous != nullptr;
  if (has_previous && params.transfer) {
    if (input.previous->rep_dim() != data.cols()) throw DimensionError("fit_epoch: previous model width mismatch");
    result.model = *input.previous;
  } else {
    result.model = make_visualization_model(data.cols(), input.epoch, params.curve, rng);
  }
  result.model.epoch = input.epoch;
  result.model.curve = params.curve;

  Trainer trainer{params, *input.ckpt, vertices, recon_weights};
  trainer.data_count = data.rows();
  trainer.previous = input.previous;
  trainer.lambda_projection = params.weights.projection;
  trainer.lambda_reconstruction = params.no_reconstruction ? 0.0 : params.weights.reconstruction;
  trainer.lambda_temporal =
      (params.no_temporal || input.epoch <= 1 || !has_previous) ? 0.0 : params.weights.temporal;
  trainer.mean_sem = input.mean_sem;

  const PairSampler sampler(complex, params.negative_rate, params.batch_positives);
  std::mt19937_64 eval_rng(seed ^ 0xD1B54A32D192ED03ULL);
  const std::vector<PairBatch> eval_batches = sampler.epoch(eval_rng);
  result.initial_loss = trainer.evaluate(result.model, eval_batches);

  SgdOptimizer optimizer({&result.model.encoder, &result.model.decoder}, params.schedule, params.momentum);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const std::vector<PairBatch> batches = sampler.epoch(rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Trainer::Step step = trainer.run(result.model, batches[b], true);
      if (!std::isfinite(step.loss)) {
        throw TrainingError("visualizer loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(b),
                            epoch, static_cast<long>(b));
      }
      optimizer.step(step.grads);
      total += step.loss;
    }
    optimizer.next_epoch();
    result.epoch_losses.push_back(batches.empty() ? 0.0 : total / static_cast<double>(batches.size()));
  }
  result.final_loss = trainer.evaluate(result.model, eval_batches);
  return result;
}

std::vector<FitResult> fit_sequence(std::span<const SequenceEpoch> epochs, const VisualizerParams& params,
                                    std::uint64_t seed) {
  if (epochs.empty()) throw ContractError("fit_sequence: no checkpoints");
  std::vector<FitResult> results;
  const Matrix no_boundary;
  for (std::size_t t = 0; t < epochs.size(); ++t) {
    const SequenceEpoch& e = epochs[t];
    if (!e.ckpt) throw ContractError("fit_sequence: missing checkpoint");
    const Matrix& boundary = params.no_boundary ? no_boundary : e.boundary;
    BavrComplex built;
    const BavrComplex* complex = (e.complex && !params.no_boundary) ? e.complex : nullptr;
    if (complex && (complex->data_count != e.data.rows() || complex->boundary_count != boundary.rows())) {
      throw ContractError("fit_sequence: prebuilt complex does not match the epoch's points");
    }
    if (!complex) {
      built = build_weighted_complex(e.data, boundary, params.k);
      complex = &built;
    }
    FitEpochInput input;
    input.ckpt = e.ckpt;
    input.data = &e.data;
    input.boundary = &boundary;
    input.complex = complex;
    input.epoch = e.ckpt->epoch;
    if (t > 0) {
      input.previous = &results.back().model;
      const std::vector<double> sem = eval_sem(epochs[t - 1].data, e.data, params.weights.k);
      double total = 0.0;
      for (double s : sem) total += s;
      input.mean_sem = total / static_cast<double>(sem.size());
    }
    const std::uint64_t epoch_seed = seed + 0x9E3779B97F4A7C15ULL * (t + 1);
    results.push_back(fit_epoch(input, params, epoch_seed));
  }
  return results;
}

Matrix project(const VisualizationModel& model, const Matrix& reps) {
  if (reps.cols() != model.encoder.in_dim()) {
    throw DimensionError("project: expected width " + std::to_string(model.encoder.in_dim()) + ", got " +
                         std::to_string(reps.cols()));
  }
  return forward(model.encoder, reps);
}

Matrix inverse_project(const VisualizationModel& model, const Matrix& points) {
  if (points.cols() != 2) throw DimensionError("inverse_project: expected 2 columns");
  return forward(model.decoder, points);
}

void save_visualization_model(const std::filesystem::path& stem, const VisualizationModel& model) {
  model.validate();
  std::vector<float> flat = flatten(model.encoder);
  const std::vector<float> dec = flatten(model.decoder);
  flat.insert(flat.end(), dec.begin(), dec.end());
  const std::filesystem::path bin = stem.string() + ".bin";
  write_f32_file(bin, flat);
  write_json_file(stem.string() + ".json",
                  Json{{"format", "dvi-visualization-model"},
                       {"version", 1},
                       {"epoch", model.epoch},
                       {"a", model.curve.a},
                       {"b", model.curve.b},
                       {"parameters", bin.filename().string()},
                       {"parameter_count", flat.size()},
                       {"networks", {{"encoder", mlp_shape_to_json(model.encoder)},
                                     {"decoder", mlp_shape_to_json(model.decoder)}}}});
}

VisualizationModel load_visualization_model(const std::filesystem::path& stem) {
  const std::filesystem::path meta_path = stem.string() + ".json";
  const Json meta = read_json_file(meta_path);
  const std::string where = "model manifest '" + meta_path.string() + "'";
  VisualizationModel model;
  try {
    if (require_member(meta, "version", where).get<int>() != 1) throw FormatError(where + ": unsupported version");
    const Json& networks = require_member(meta, "networks", where);
    model.encoder = mlp_from_shape_json(require_member(networks, "encoder", where));
    model.decoder = mlp_from_shape_json(require_member(networks, "decoder", where));
    model.epoch = require_member(meta, "epoch", where).get<int>();
    model.curve.a = require_member(meta, "a", where).get<double>();
    model.curve.b = require_member(meta, "b", where).get<double>();
  } catch (const Json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  const std::vector<float> flat = read_f32_file(stem.parent_path() / meta.at("parameters").get<std::string>());
  const std::size_t enc = model.encoder.parameter_count();
  if (flat.size() != enc + model.decoder.parameter_count()) {
    throw FormatError(where + ": parameter count does not match the declared shapes");
  }
  unflatten(std::span<const float>(flat.data(), enc), model.encoder);
  unflatten(std::span<const float>(flat.data() + enc, flat.size() - enc), model.decoder);
  model.validate();
  return model;
}

}  // namespace dvi
