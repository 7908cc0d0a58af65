#include "dvi/subject.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "dvi/binary_io.hpp"
#include "dvi/json_io.hpp"
#include "dvi/optimizer.hpp"
#include "dvi/transforms.hpp"

namespace dvi {

void SubjectCheckpoint::validate() const {
  dvi::validate(feature_net);
  dvi::validate(head);
  if (feature_net.out_dim() != head.in_dim()) {
    throw DimensionError("checkpoint: feature out-dim " + std::to_string(feature_net.out_dim()) +
                         " != head in-dim " + std::to_string(head.in_dim()));
  }
  if (head.out_dim() < 2) throw DimensionError("checkpoint: head needs at least two classes");
}

std::vector<SubjectCheckpoint> train_subject(const Dataset& train,
                                             const SubjectTrainingParams& params) {
  if (params.epochs < 2) throw ContractError("train_subject: need at least 2 epochs");
  if (params.batch_size == 0) throw ContractError("train_subject: zero batch size");
  train.validate();

  std::mt19937_64 rng(params.seed);
  std::vector<std::size_t> feature_sizes{train.dim()};
  feature_sizes.insert(feature_sizes.end(), params.hidden.begin(), params.hidden.end());
  feature_sizes.push_back(params.rep_dim);
  const std::vector<std::size_t> head_sizes{params.rep_dim,
                                            static_cast<std::size_t>(train.class_count)};

  SubjectCheckpoint current;
  current.feature_net = make_mlp<float>(feature_sizes, Activation::relu, Activation::relu, rng);
  current.head = make_mlp<float>(head_sizes, Activation::identity, Activation::identity, rng);

  SgdOptimizer optimizer({&current.feature_net, &current.head},
                         LrSchedule{params.learning_rate, 0, 1.0}, params.momentum);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<SubjectCheckpoint> checkpoints;

  for (int epoch = 1; epoch <= params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    long batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += params.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + params.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      std::vector<int> labels;
      labels.reserve(rows.size());
      for (std::size_t r : rows) labels.push_back(train.labels[r]);

      Tape<float> tape;
      const Var x = tape.constant(gather_rows(train.inputs, rows));
      const MlpVars fv = bind(tape, current.feature_net);
      const MlpVars gv = bind(tape, current.head);
      const Var logits = forward(tape, current.head, gv, forward(tape, current.feature_net, fv, x));
      const Var loss = tape.softmax_cross_entropy(logits, labels);
      if (!std::isfinite(tape.value(loss)(0, 0))) {
        throw TrainingError("subject training diverged at epoch " + std::to_string(epoch), epoch,
                            batch_index);
      }
      tape.backward(loss);
      const std::vector<Mlp> grads{collect_gradients(tape, current.feature_net, fv),
                                   collect_gradients(tape, current.head, gv)};
      optimizer.step(grads);
    }
    optimizer.next_epoch();
    current.epoch = epoch;
    current.train_accuracy = accuracy(current, train);
    checkpoints.push_back(current);
  }
  return checkpoints;
}

Matrix features(const SubjectCheckpoint& ckpt, const Matrix& inputs) {
  return forward(ckpt.feature_net, inputs);
}

Prediction predict(const SubjectCheckpoint& ckpt, const Matrix& reps) {
  Prediction p;
  p.logits = forward(ckpt.head, reps);
  p.top1.resize(reps.rows());
  p.top2.resize(reps.rows());
  for (std::size_t i = 0; i < reps.rows(); ++i) {
    const TopTwo t = top_two(p.logits.row(i));
    p.top1[i] = static_cast<int>(t.first);
    p.top2[i] = static_cast<int>(t.second);
  }
  return p;
}

Matrix classify(const SubjectCheckpoint& ckpt, const Matrix& inputs) {
  return forward(ckpt.head, features(ckpt, inputs));
}

double accuracy(const SubjectCheckpoint& ckpt, const Dataset& data) {
  const Prediction p = predict(ckpt, features(ckpt, data.inputs));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += p.top1[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

std::string epoch_file_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.bin", epoch);
  return buf;
}

}  // namespace

void write_checkpoints(const std::filesystem::path& dir,
                       const std::vector<SubjectCheckpoint>& checkpoints) {
  if (checkpoints.empty()) throw ContractError("write_checkpoints: nothing to write");
  const SubjectCheckpoint& first = checkpoints.front();
  Json epochs = Json::object();
  Json accuracy = Json::object();
  for (const auto& ckpt : checkpoints) {
    ckpt.validate();
    std::vector<float> flat = flatten(ckpt.feature_net);
    const std::vector<float> head = flatten(ckpt.head);
    flat.insert(flat.end(), head.begin(), head.end());
    const std::string name = epoch_file_name(ckpt.epoch);
    write_f32_file(dir / name, flat);
    epochs[std::to_string(ckpt.epoch)] = name;
    accuracy[std::to_string(ckpt.epoch)] = ckpt.train_accuracy;
  }
  const Json manifest{
      {"format", "dvi-subject-checkpoints"},
      {"version", 1},
      {"d", first.input_dim()},
      {"h", first.rep_dim()},
      {"C", first.class_count()},
      {"layer_sizes", {{"feature", first.feature_net.layer_sizes()},
                       {"head", first.head.layer_sizes()}}},
      {"networks", {{"feature", mlp_shape_to_json(first.feature_net)},
                    {"head", mlp_shape_to_json(first.head)}}},
      {"epochs", epochs},
      {"train_accuracy", accuracy},
  };
  write_json_file(dir / "manifest.json", manifest);
}

std::vector<SubjectCheckpoint> ingest_checkpoint_dump(const std::filesystem::path& manifest_path) {
  const Json manifest = read_json_file(manifest_path);
  const std::filesystem::path dir = manifest_path.parent_path();
  const std::string where = "checkpoint manifest '" + manifest_path.string() + "'";
  try {
    const auto& networks = require_member(manifest, "networks", where);
    const Mlp feature_shape = mlp_from_shape_json(require_member(networks, "feature", where));
    const Mlp head_shape = mlp_from_shape_json(require_member(networks, "head", where));
    const auto d = require_member(manifest, "d", where).get<std::size_t>();
    const auto h = require_member(manifest, "h", where).get<std::size_t>();
    const auto c = require_member(manifest, "C", where).get<std::size_t>();
    if (feature_shape.in_dim() != d || feature_shape.out_dim() != h || head_shape.in_dim() != h ||
        head_shape.out_dim() != c) {
      throw FormatError(where + ": network shapes disagree with d/h/C");
    }

    std::map<int, std::string> files;
    for (const auto& [key, value] : require_member(manifest, "epochs", where).items()) {
      files[std::stoi(key)] = value.get<std::string>();
    }
    if (files.empty()) throw FormatError(where + ": no epochs listed");
    int expected = files.begin()->first;
    for (const auto& [epoch, file] : files) {
      if (epoch != expected) {
        throw FormatError(where + ": epoch " + std::to_string(expected) + " missing (gap)");
      }
      ++expected;
    }

    std::map<int, double> acc;
    if (manifest.contains("train_accuracy")) {
      for (const auto& [key, value] : manifest.at("train_accuracy").items()) {
        acc[std::stoi(key)] = value.get<double>();
      }
    }

    std::vector<SubjectCheckpoint> out;
    for (const auto& [epoch, file] : files) {
      const std::filesystem::path path = dir / file;
      if (!std::filesystem::exists(path)) {
        throw FormatError(where + ": file for epoch " + std::to_string(epoch) + " missing");
      }
      const std::vector<float> flat = read_f32_file(path);
      const std::size_t nf = feature_shape.parameter_count();
      if (flat.size() != nf + head_shape.parameter_count()) {
        throw FormatError(where + ": epoch " + std::to_string(epoch) +
                          " parameter count drifts from the declared shape");
      }
      SubjectCheckpoint ckpt;
      ckpt.epoch = epoch;
      ckpt.feature_net = feature_shape;
      ckpt.head = head_shape;
      unflatten(std::span<const float>(flat.data(), nf), ckpt.feature_net);
      unflatten(std::span<const float>(flat.data() + nf, flat.size() - nf), ckpt.head);
      ckpt.train_accuracy = acc.count(epoch) ? acc[epoch] : 0.0;
      out.push_back(std::move(ckpt));
    }
    return out;
  } catch (const Json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

}  // namespace dvi
