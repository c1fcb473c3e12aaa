// SPDX-License-Identifier: Apache-2.0
#include "longimam/model/model.hpp"

#include <cmath>
#include <cstring>
#include <json.hpp>

#include "longimam/cohort/types.hpp"
#include "longimam/errors.hpp"
#include "longimam/numerics/kernels.hpp"
#include "longimam/numerics/rng.hpp"

namespace longimam::model {

namespace kernels = numerics::kernels;
using numerics::Rng;
using numerics::Shape;

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["channels"] = channels;
  j["final_channels"] = final_channels;
  j["feature_width"] = feature_width;
  j["gru_hidden"] = gru_hidden;
  j["head_hidden1"] = head_hidden1;
  j["head_hidden2"] = head_hidden2;
  j["image_h"] = image_h;
  j["image_w"] = image_w;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw DataError("model config must be a JSON object");
  ModelConfig c;
  for (auto& [key, value] : j.items()) {
    try {
      if (key == "channels") c.channels = value.get<std::vector<std::size_t>>();
      else if (key == "final_channels") c.final_channels = value.get<std::size_t>();
      else if (key == "feature_width") c.feature_width = value.get<std::size_t>();
      else if (key == "gru_hidden") c.gru_hidden = value.get<std::size_t>();
      else if (key == "head_hidden1") c.head_hidden1 = value.get<std::size_t>();
      else if (key == "head_hidden2") c.head_hidden2 = value.get<std::size_t>();
      else if (key == "image_h") c.image_h = value.get<std::size_t>();
      else if (key == "image_w") c.image_w = value.get<std::size_t>();
      else throw DataError("model config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw DataError("model config key '" + key + "': " + e.what());
    }
  }
  if (c.channels.size() != 6) throw DataError("model config: channels must list six ConvBlock widths");
  if (c.image_h < 64 || c.image_w < 64) throw DataError("model config: image extents must be >= 64");
  return c;
}

std::uint64_t ModelConfig::fingerprint() const { return numerics::fnv1a(to_json()); }

namespace {

Parameter uniform_param(std::string name, Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return Parameter(std::move(name), std::move(t));
}

Parameter zeros(std::string name, Shape shape) { return Parameter(std::move(name), Tensor(std::move(shape))); }

std::string block_name(std::size_t i) { return "backbone.block" + std::to_string(i); }

}  // namespace

LongiMamParams LongiMamParams::init(const ModelConfig& config, std::uint64_t seed) {
  LongiMamParams p;
  p.config = config;
  std::size_t in = 1;
  std::vector<std::size_t> widths = config.channels;
  widths.push_back(config.final_channels);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    Rng rng = Rng::substream(seed, "init.backbone", {i});
    const std::size_t out = widths[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
    ConvBlockParams b;
    b.weight = uniform_param(block_name(i) + ".conv.weight", {out, in, 3, 3}, bound, rng);
    b.gamma = Parameter(block_name(i) + ".bn.gamma", Tensor({out}, 1.0));
    b.beta = zeros(block_name(i) + ".bn.beta", {out});
    b.bn = BatchNormState(out);
    p.backbone.push_back(std::move(b));
    in = out;
  }
  const std::size_t f = config.feature_width;
  {
    Rng rng = Rng::substream(seed, "init.projector");
    p.projector_weight = uniform_param("projector.weight", {f, in, 1, 1}, std::sqrt(6.0 / static_cast<double>(in)), rng);
    p.projector_bias = zeros("projector.bias", {f});
  }
  {
    Rng rng = Rng::substream(seed, "init.gru_cc");
    p.gru_cc = numerics::GruParams("gru_cc", f, config.gru_hidden, rng);
  }
  {
    Rng rng = Rng::substream(seed, "init.gru_mlo");
    p.gru_mlo = numerics::GruParams("gru_mlo", f, config.gru_hidden, rng);
  }
  Rng rng = Rng::substream(seed, "init.head");
  const std::size_t h = config.gru_hidden * 2;
  auto dense = [&](const std::string& name, std::size_t out, std::size_t fan_in, Parameter& w, Parameter& b) {
    w = uniform_param(name + ".weight", {out, fan_in}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    b = zeros(name + ".bias", {out});
  };
  dense("head.fc1", config.head_hidden1, h, p.fc1_weight, p.fc1_bias);
  dense("head.fc2", config.head_hidden2, config.head_hidden1, p.fc2_weight, p.fc2_bias);
  dense("head.fc3", 1, config.head_hidden2, p.fc3_weight, p.fc3_bias);
  return p;
}

std::vector<Parameter*> LongiMamParams::backbone_parameters() {
  std::vector<Parameter*> out;
  for (ConvBlockParams& b : backbone) {
    out.push_back(&b.weight);
    out.push_back(&b.gamma);
    out.push_back(&b.beta);
  }
  return out;
}

std::vector<Parameter*> LongiMamParams::upper_parameters() {
  std::vector<Parameter*> out{&projector_weight, &projector_bias};
  for (Parameter* q : gru_cc.parameters()) out.push_back(q);
  for (Parameter* q : gru_mlo.parameters()) out.push_back(q);
  for (Parameter* q : {&fc1_weight, &fc1_bias, &fc2_weight, &fc2_bias, &fc3_weight, &fc3_bias}) out.push_back(q);
  return out;
}

std::vector<Parameter*> LongiMamParams::parameters() {
  std::vector<Parameter*> out = backbone_parameters();
  for (Parameter* q : upper_parameters()) out.push_back(q);
  return out;
}

std::vector<const Parameter*> LongiMamParams::parameters() const {
  auto mutable_list = const_cast<LongiMamParams*>(this)->parameters();
  return {mutable_list.begin(), mutable_list.end()};
}

void LongiMamParams::set_backbone_trainable(bool trainable) {
  for (Parameter* q : backbone_parameters()) q->trainable = trainable;
}

bool LongiMamParams::backbone_trainable() const {
  for (const ConvBlockParams& b : backbone) {
    if (b.weight.trainable || b.gamma.trainable || b.beta.trainable) return true;
  }
  return false;
}

std::vector<std::pair<std::string, Tensor*>> LongiMamParams::named_state() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    ConvBlockParams& b = backbone[i];
    out.emplace_back(b.weight.name, &b.weight.value);
    out.emplace_back(b.gamma.name, &b.gamma.value);
    out.emplace_back(b.beta.name, &b.beta.value);
    out.emplace_back(block_name(i) + ".bn.running_mean", &b.bn.running_mean);
    out.emplace_back(block_name(i) + ".bn.running_var", &b.bn.running_var);
  }
  for (Parameter* q : upper_parameters()) out.emplace_back(q->name, &q->value);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> LongiMamParams::named_state() const {
  auto list = const_cast<LongiMamParams*>(this)->named_state();
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : list) out.emplace_back(name, t);
  return out;
}

std::uint64_t LongiMamParams::backbone_digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : named_state()) {
    if (name.rfind("backbone.", 0) != 0) continue;
    h = numerics::fnv1a(name, h);
    h = numerics::fnv1a(std::string_view(reinterpret_cast<const char*>(t->raw()), t->size() * sizeof(double)), h);
  }
  return h;
}

std::pair<std::size_t, std::size_t> backbone_output_extent(std::size_t h, std::size_t w) {
  for (int i = 0; i < 6; ++i) {
    if (h < 2 || w < 2) throw ShapeError("input too small for six 2x2 poolings");
    h /= 2;
    w /= 2;
  }
  return {h, w};
}

LongiMamVars bind(Tape& tape, LongiMamParams& p) {
  LongiMamVars v;
  for (ConvBlockParams& b : p.backbone) {
    v.conv.push_back(tape.parameter(b.weight));
    v.gamma.push_back(tape.parameter(b.gamma));
    v.beta.push_back(tape.parameter(b.beta));
  }
  v.projector_weight = tape.parameter(p.projector_weight);
  v.projector_bias = tape.parameter(p.projector_bias);
  v.gru_cc = numerics::bind(tape, p.gru_cc);
  v.gru_mlo = numerics::bind(tape, p.gru_mlo);
  v.fc1_weight = tape.parameter(p.fc1_weight);
  v.fc1_bias = tape.parameter(p.fc1_bias);
  v.fc2_weight = tape.parameter(p.fc2_weight);
  v.fc2_bias = tape.parameter(p.fc2_bias);
  v.fc3_weight = tape.parameter(p.fc3_weight);
  v.fc3_bias = tape.parameter(p.fc3_bias);
  return v;
}

namespace {

void check_images(const Shape& s) {
  if (s.size() != 4 || s[1] != 1) throw ShapeError("images must be [N,1,H,W], got " + numerics::shape_string(s));
  if (s[2] < 64 || s[3] < 64) {
    throw ShapeError("image extent " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                     " is below the 64x64 minimum");
  }
}

}  // namespace

Var backbone_forward(Var images, const LongiMamVars& vars, LongiMamParams& params, BatchNormMode mode) {
  check_images(images.shape());
  Var x = images;
  const std::size_t blocks = params.backbone.size();
  for (std::size_t i = 0; i < blocks; ++i) {
    x = numerics::conv2d(x, vars.conv[i]);
    x = numerics::batchnorm2d(x, vars.gamma[i], vars.beta[i], params.backbone[i].bn, mode);
    x = numerics::relu(x);
    if (i + 1 < blocks) x = numerics::maxpool2x2(x);
  }
  return x;
}

Tensor backbone_infer(const LongiMamParams& params, const Tensor& images) {
  check_images(images.shape());
  Tensor x = images;
  const std::size_t blocks = params.backbone.size();
  for (std::size_t i = 0; i < blocks; ++i) {
    const ConvBlockParams& b = params.backbone[i];
    x = kernels::conv2d(x, b.weight.value, nullptr);
    x = kernels::batchnorm2d_eval(x, b.gamma.value, b.beta.value, b.bn);
    x = kernels::relu(x);
    if (i + 1 < blocks) x = kernels::maxpool2x2(x);
  }
  return x;
}

Var project(Var backbone_out, const LongiMamVars& vars) {
  return numerics::global_maxpool(numerics::conv2d(backbone_out, vars.projector_weight, vars.projector_bias));
}

Var sequence_head(Var features, std::size_t batch, std::size_t timesteps, const LongiMamVars& vars) {
  return sequence_head(features, batch, timesteps, vars, nullptr);
}

Var sequence_head(Var features, std::size_t batch, std::size_t timesteps, const LongiMamVars& vars,
                  HeadTrace* trace) {
  const Shape& s = features.shape();
  if (s.size() != 2 || s[0] != batch * timesteps * 4) {
    throw ShapeError("features must be [B*T*4,F], got " + numerics::shape_string(s));
  }
  if (timesteps == 0) throw UsageError("sequence must have at least one timestep");
  Tape& tape = *features.tape;
  const std::size_t hidden = vars.gru_cc.u_z.shape()[0];
  Var h_cc = tape.constant(Tensor({batch, hidden}));
  Var h_mlo = tape.constant(Tensor({batch, hidden}));
  auto rows = [&](std::size_t t, cohort::Side side, cohort::View view) {
    std::vector<std::size_t> r(batch);
    for (std::size_t b = 0; b < batch; ++b) r[b] = (b * timesteps + t) * 4 + cohort::image_slot(side, view);
    return r;
  };
  using cohort::Side;
  using cohort::View;
  for (std::size_t t = 0; t < timesteps; ++t) {
    Var d_cc = numerics::sub(numerics::gather_rows(features, rows(t, Side::left, View::cc)),
                             numerics::gather_rows(features, rows(t, Side::right, View::cc)));
    Var d_mlo = numerics::sub(numerics::gather_rows(features, rows(t, Side::left, View::mlo)),
                              numerics::gather_rows(features, rows(t, Side::right, View::mlo)));
    if (trace) {
      trace->diffs_cc.push_back(d_cc);
      trace->diffs_mlo.push_back(d_mlo);
    }
    h_cc = numerics::gru_cell(d_cc, h_cc, vars.gru_cc);
    h_mlo = numerics::gru_cell(d_mlo, h_mlo, vars.gru_mlo);
  }
  Var h = numerics::concat_cols(h_cc, h_mlo);
  if (trace) trace->hidden = h;
  Var y = numerics::relu(numerics::linear(h, vars.fc1_weight, vars.fc1_bias));
  y = numerics::relu(numerics::linear(y, vars.fc2_weight, vars.fc2_bias));
  return numerics::linear(y, vars.fc3_weight, vars.fc3_bias);
}

Tensor stack_images(const std::vector<const preprocess::Image*>& images) {
  if (images.empty()) throw UsageError("no images to stack");
  const std::size_t h = images.front()->height, w = images.front()->width;
  Tensor out({images.size(), 1, h, w});
  double* dst = out.raw();
  for (const preprocess::Image* im : images) {
    if (im->height != h || im->width != w) throw ShapeError("images in one batch must share extents");
    for (float v : im->pixels) *dst++ = v;
  }
  return out;
}

Tensor extract_features(const LongiMamParams& params, const preprocess::Image& image) {
  Tensor x = stack_images({&image});
  Tensor b = backbone_infer(params, x);
  Tensor y = kernels::global_maxpool(kernels::conv2d(b, params.projector_weight.value, &params.projector_bias.value));
  return y.reshaped({y.size()});
}

Tensor view_difference(const Tensor& left, const Tensor& right) {
  if (left.shape() != right.shape()) throw ShapeError("view_difference: shapes differ");
  Tensor out = left;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= right[i];
  return out;
}

Tensor encode_sequence(const std::vector<Tensor>& diffs, numerics::GruParams& gru) {
  if (diffs.empty()) throw UsageError("encode_sequence: empty sequence");
  Tape tape;
  numerics::GruVars g = numerics::bind(tape, gru);
  Var h = tape.constant(Tensor({1, gru.hidden_size()}));
  for (const Tensor& d : diffs) h = numerics::gru_cell(tape.constant(d.reshaped({1, d.size()})), h, g);
  return h.value().reshaped({gru.hidden_size()});
}

}  // namespace longimam::model
