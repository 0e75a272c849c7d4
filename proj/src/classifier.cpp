#include "solo/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "solo/errors.hpp"
#include "solo/kernels.hpp"

namespace solo {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class P, class V>
std::vector<V> list_tensors(P& p) {
  const std::size_t d = p.arch.input_dim;
  const std::size_t h = p.arch.hidden;
  const std::size_t m = p.arch.mlp_hidden;
  static const std::string kNames[] = {
      "fwd.w_i", "fwd.w_f", "fwd.w_g", "fwd.w_o",
      "fwd.u_i", "fwd.u_f", "fwd.u_g", "fwd.u_o",
      "fwd.b_i", "fwd.b_f", "fwd.b_g", "fwd.b_o",
      "bwd.w_i", "bwd.w_f", "bwd.w_g", "bwd.w_o",
      "bwd.u_i", "bwd.u_f", "bwd.u_g", "bwd.u_o",
      "bwd.b_i", "bwd.b_f", "bwd.b_g", "bwd.b_o",
  };
  std::vector<V> out;
  out.reserve(28);
  auto* dirs0 = &p.fwd;
  auto* dirs1 = &p.bwd;
  decltype(dirs0) dirs[2] = {dirs0, dirs1};
  for (int dir = 0; dir < 2; ++dir) {
    for (int g = 0; g < 4; ++g)
      out.push_back({kNames[dir * 12 + g].c_str(), &dirs[dir]->w[g], h, d, true});
    for (int g = 0; g < 4; ++g)
      out.push_back({kNames[dir * 12 + 4 + g].c_str(), &dirs[dir]->u[g], h, h, true});
    for (int g = 0; g < 4; ++g)
      out.push_back({kNames[dir * 12 + 8 + g].c_str(), &dirs[dir]->b[g], h, 1, false});
  }
  out.push_back({"mlp_w1", &p.mlp_w1, m, 2 * h, true});
  out.push_back({"mlp_b1", &p.mlp_b1, m, 1, false});
  out.push_back({"mlp_w2", &p.mlp_w2, 1, m, true});
  out.push_back({"mlp_b2", &p.mlp_b2, 1, 1, false});
  return out;
}

}  // namespace

void ClassifierArch::validate() const {
  if (input_dim < 1) raise(ErrorKind::Config, "classifier.input_dim must be >= 1");
  if (hidden < 1) raise(ErrorKind::Config, "classifier.hidden must be >= 1");
  if (mlp_hidden < 1) raise(ErrorKind::Config, "classifier.mlp_hidden must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    raise(ErrorKind::Config, "classifier.dropout_rate must be in [0, 1)");
}

ClassifierParams ClassifierParams::zeros(const ClassifierArch& arch) {
  arch.validate();
  ClassifierParams p;
  p.arch = arch;
  for (auto* dir : {&p.fwd, &p.bwd}) {
    for (int g = 0; g < 4; ++g) {
      dir->w[g].assign(arch.hidden * arch.input_dim, 0.0);
      dir->u[g].assign(arch.hidden * arch.hidden, 0.0);
      dir->b[g].assign(arch.hidden, 0.0);
    }
  }
  p.mlp_w1.assign(arch.mlp_hidden * 2 * arch.hidden, 0.0);
  p.mlp_b1.assign(arch.mlp_hidden, 0.0);
  p.mlp_w2.assign(arch.mlp_hidden, 0.0);
  p.mlp_b2.assign(1, 0.0);
  return p;
}

ClassifierParams ClassifierParams::init(const ClassifierArch& arch,
                                        RngStream& rng) {
  ClassifierParams p = zeros(arch);
  for (TensorView t : p.tensors()) {
    if (!t.decay) continue;  // biases stay zero (forget bias set below)
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols));
    for (double& v : *t.data) v = rng.uniform(-bound, bound);
  }
  std::fill(p.fwd.b[1].begin(), p.fwd.b[1].end(), 1.0);
  std::fill(p.bwd.b[1].begin(), p.bwd.b[1].end(), 1.0);
  return p;
}

std::vector<TensorView> ClassifierParams::tensors() {
  return list_tensors<ClassifierParams, TensorView>(*this);
}

std::vector<ConstTensorView> ClassifierParams::tensors() const {
  return list_tensors<const ClassifierParams, ConstTensorView>(*this);
}

std::vector<double> lstm_direction_forward(const LstmDirection& dir,
                                           const ClassifierArch& arch,
                                           const EmbeddingSequence& seq,
                                           bool reversed,
                                           DirectionTrace* trace) {
  if (seq.dim != arch.input_dim)
    raise(ErrorKind::Config,
          "embedding dim " + std::to_string(seq.dim) +
              " does not match classifier input_dim " +
              std::to_string(arch.input_dim));
  if (seq.frames == 0)
    raise(ErrorKind::DegenerateInput, "empty embedding sequence");

  const std::size_t T = seq.frames;
  const std::size_t H = arch.hidden;
  const std::size_t D = arch.input_dim;

  std::vector<double> hs(T * H, 0.0);
  std::vector<double> c(H, 0.0), c_next(H);
  std::vector<double> gates[4];
  for (auto& g : gates) g.resize(H);
  if (trace) {
    for (auto& g : trace->gate) g.resize(T * H);
    trace->c.resize(T * H);
    trace->h.resize(T * H);
  }

  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reversed ? T - 1 - s : s;
    const double* x = seq.row(t);
    const double* h_prev = s > 0 ? hs.data() + (s - 1) * H : nullptr;
    for (int g = 0; g < 4; ++g) {
      const double* wrow = dir.w[g].data();
      const double* urow = dir.u[g].data();
      for (std::size_t j = 0; j < H; ++j, wrow += D, urow += H) {
        double pre = dir.b[g][j] + kernels::dot(wrow, x, D);
        if (h_prev) pre += kernels::dot(urow, h_prev, H);
        gates[g][j] = g == 2 ? std::tanh(pre) : sigmoid(pre);
      }
    }
    double* h = hs.data() + s * H;
    for (std::size_t j = 0; j < H; ++j) {
      c_next[j] = gates[1][j] * c[j] + gates[0][j] * gates[2][j];
      h[j] = gates[3][j] * std::tanh(c_next[j]);
    }
    std::swap(c, c_next);
    if (trace) {
      for (int g = 0; g < 4; ++g)
        std::copy_n(gates[g].data(), H, trace->gate[g].data() + s * H);
      std::copy_n(c.data(), H, trace->c.data() + s * H);
      std::copy_n(h, H, trace->h.data() + s * H);
    }
  }
  return hs;
}

double forward_masked(const ClassifierParams& params,
                      const EmbeddingSequence& seq,
                      const std::vector<double>& mask, ForwardTrace& trace) {
  const std::size_t H = params.arch.hidden;
  const std::size_t M = params.arch.mlp_hidden;
  if (mask.size() != M)
    raise(ErrorKind::Config, "dropout mask size does not match mlp width");

  auto h_fwd = lstm_direction_forward(params.fwd, params.arch, seq, false,
                                      &trace.fwd);
  auto h_bwd = lstm_direction_forward(params.bwd, params.arch, seq, true,
                                      &trace.bwd);

  trace.feature.resize(2 * H);
  const std::size_t last = (seq.frames - 1) * H;
  std::copy_n(h_fwd.data() + last, H, trace.feature.data());
  std::copy_n(h_bwd.data() + last, H, trace.feature.data() + H);

  trace.mask = mask;
  trace.pre1.resize(M);
  trace.act1.resize(M);
  for (std::size_t j = 0; j < M; ++j) {
    const double pre = params.mlp_b1[j] +
                       kernels::dot(params.mlp_w1.data() + j * 2 * H,
                                    trace.feature.data(), 2 * H);
    trace.pre1[j] = pre;
    trace.act1[j] = (pre > 0.0 ? pre : 0.0) * trace.mask[j];
  }
  trace.logit =
      params.mlp_b2[0] + kernels::dot(params.mlp_w2.data(), trace.act1.data(), M);
  trace.prob = sigmoid(trace.logit);
  return trace.prob;
}

double forward(const ClassifierParams& params, const EmbeddingSequence& seq,
               ForwardTrace& trace, bool training, RngStream* rng) {
  const std::size_t M = params.arch.mlp_hidden;
  std::vector<double> mask(M, 1.0);
  if (training && params.arch.dropout_rate > 0.0) {
    if (!rng)
      raise(ErrorKind::Config, "training-mode forward requires an rng stream");
    const double keep = 1.0 - params.arch.dropout_rate;
    for (std::size_t j = 0; j < M; ++j)
      mask[j] = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  }
  return forward_masked(params, seq, mask, trace);
}

double forward_eval(const ClassifierParams& params,
                    const EmbeddingSequence& seq) {
  ForwardTrace trace;
  return forward(params, seq, trace, false, nullptr);
}

double bce_loss(double p, int y) {
  const double q = std::clamp(p, 1e-7, 1.0 - 1e-7);
  return y ? -std::log(q) : -std::log(1.0 - q);
}

namespace {

// BPTT through one direction. d_last is the loss gradient w.r.t. the final
// hidden state (in consumption order); gradients accumulate into `g`.
void backward_direction(const LstmDirection& dir, LstmDirection& g,
                        const ClassifierArch& arch, const EmbeddingSequence& seq,
                        const DirectionTrace& tr, bool reversed,
                        const double* d_last) {
  const std::size_t T = seq.frames;
  const std::size_t H = arch.hidden;
  const std::size_t D = arch.input_dim;

  std::vector<double> dh(d_last, d_last + H), dc(H, 0.0), dh_prev(H);
  std::vector<double> dgate[4];
  for (auto& v : dgate) v.resize(H);

  for (std::size_t s = T; s-- > 0;) {
    const std::size_t t = reversed ? T - 1 - s : s;
    const double* x = seq.row(t);
    const double* h_prev = s > 0 ? tr.h.data() + (s - 1) * H : nullptr;
    const double* c_prev = s > 0 ? tr.c.data() + (s - 1) * H : nullptr;
    const double* gi = tr.gate[0].data() + s * H;
    const double* gf = tr.gate[1].data() + s * H;
    const double* gg = tr.gate[2].data() + s * H;
    const double* go = tr.gate[3].data() + s * H;
    const double* c = tr.c.data() + s * H;

    for (std::size_t j = 0; j < H; ++j) {
      const double tc = std::tanh(c[j]);
      dgate[3][j] = dh[j] * tc * go[j] * (1.0 - go[j]);
      const double dcj = dc[j] + dh[j] * go[j] * (1.0 - tc * tc);
      dgate[0][j] = dcj * gg[j] * gi[j] * (1.0 - gi[j]);
      dgate[2][j] = dcj * gi[j] * (1.0 - gg[j] * gg[j]);
      dgate[1][j] = c_prev ? dcj * c_prev[j] * gf[j] * (1.0 - gf[j]) : 0.0;
      dc[j] = dcj * gf[j];  // becomes dc for step s-1
    }

    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    for (int k = 0; k < 4; ++k) {
      const double* d = dgate[k].data();
      double* wg = g.w[k].data();
      double* ug = g.u[k].data();
      const double* urow = dir.u[k].data();
      for (std::size_t j = 0; j < H; ++j, wg += D, ug += H, urow += H) {
        g.b[k][j] += d[j];
        kernels::axpy(d[j], x, wg, D);
        if (h_prev) {
          kernels::axpy(d[j], h_prev, ug, H);
          kernels::axpy(d[j], urow, dh_prev.data(), H);
        }
      }
    }
    std::swap(dh, dh_prev);
  }
}

}  // namespace

void backward(const ClassifierParams& params, const EmbeddingSequence& seq,
              const ForwardTrace& trace, int y, ClassifierParams& grads) {
  const std::size_t H = params.arch.hidden;
  const std::size_t M = params.arch.mlp_hidden;

  // Gradient of BCE∘sigmoid w.r.t. the logit (the clamp in bce_loss is a
  // numerical guard and is not differentiated).
  const double dlogit = trace.prob - static_cast<double>(y);

  grads.mlp_b2[0] += dlogit;
  kernels::axpy(dlogit, trace.act1.data(), grads.mlp_w2.data(), M);

  std::vector<double> dpre1(M);
  for (std::size_t j = 0; j < M; ++j) {
    const double dact = dlogit * params.mlp_w2[j];
    dpre1[j] = trace.pre1[j] > 0.0 ? dact * trace.mask[j] : 0.0;
  }

  std::vector<double> dfeature(2 * H, 0.0);
  for (std::size_t j = 0; j < M; ++j) {
    grads.mlp_b1[j] += dpre1[j];
    kernels::axpy(dpre1[j], trace.feature.data(), grads.mlp_w1.data() + j * 2 * H,
                  2 * H);
    kernels::axpy(dpre1[j], params.mlp_w1.data() + j * 2 * H, dfeature.data(),
                  2 * H);
  }

  backward_direction(params.fwd, grads.fwd, params.arch, seq, trace.fwd, false,
                     dfeature.data());
  backward_direction(params.bwd, grads.bwd, params.arch, seq, trace.bwd, true,
                     dfeature.data() + H);
}

void save_checkpoint(const ClassifierParams& params, const CheckpointMeta& meta,
                     const std::string& path) {
  nlohmann::ordered_json header;
  header["arch"] = {{"input_dim", params.arch.input_dim},
                    {"hidden", params.arch.hidden},
                    {"mlp_hidden", params.arch.mlp_hidden},
                    {"dropout_rate", params.arch.dropout_rate}};
  header["epoch"] = meta.epoch;
  header["metrics"] = {{"train_loss", meta.train_loss},
                       {"val_loss", meta.val_loss},
                       {"val_accuracy", meta.val_accuracy}};
  header["seed"] = meta.seed;
  nlohmann::ordered_json order = nlohmann::ordered_json::array();
  for (const ConstTensorView& t : params.tensors()) order.push_back(t.name);
  header["tensor_order"] = std::move(order);

  const std::string hdr = header.dump();
  std::string out;
  out += "SOLOCKPT";
  const std::uint32_t hlen = static_cast<std::uint32_t>(hdr.size());
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((hlen >> (8 * i)) & 0xff));
  out += hdr;
  for (const ConstTensorView& t : params.tensors()) {
    for (double v : *t.data) {
      const float f = static_cast<float>(v);
      char buf[4];
      std::memcpy(buf, &f, 4);
      out.append(buf, 4);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot create checkpoint file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) raise(ErrorKind::Io, "write failed for checkpoint file: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open checkpoint file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || bytes.compare(0, 8, "SOLOCKPT") != 0)
    raise(ErrorKind::Format, "not a checkpoint file: " + path);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(p[8 + i]) << (8 * i);
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen))
    raise(ErrorKind::Format, "truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format,
          "bad checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint ck;
  try {
    ClassifierArch arch;
    arch.input_dim = header.at("arch").at("input_dim").get<std::size_t>();
    arch.hidden = header.at("arch").at("hidden").get<std::size_t>();
    arch.mlp_hidden = header.at("arch").at("mlp_hidden").get<std::size_t>();
    arch.dropout_rate = header.at("arch").at("dropout_rate").get<double>();
    ck.params = ClassifierParams::zeros(arch);
    ck.meta.epoch = header.at("epoch").get<int>();
    ck.meta.seed = header.at("seed").get<std::uint64_t>();
    const auto& metrics = header.at("metrics");
    ck.meta.train_loss = metrics.at("train_loss").get<double>();
    ck.meta.val_loss = metrics.at("val_loss").get<double>();
    ck.meta.val_accuracy = metrics.at("val_accuracy").get<double>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format,
          "incomplete checkpoint header in " + path + ": " + e.what());
  }

  std::size_t offset = 12 + hlen;
  for (TensorView t : ck.params.tensors()) {
    const std::size_t need = 4 * t.data->size();
    if (bytes.size() - offset < need)
      raise(ErrorKind::Format, "truncated checkpoint payload at tensor " +
                                   std::string(t.name) + ": " + path);
    for (std::size_t i = 0; i < t.data->size(); ++i) {
      float v;
      std::memcpy(&v, bytes.data() + offset + 4 * i, 4);
      if (!std::isfinite(v))
        raise(ErrorKind::Format, "non-finite value in checkpoint tensor " +
                                     std::string(t.name) + ": " + path);
      (*t.data)[i] = static_cast<double>(v);
    }
    offset += need;
  }
  if (offset != bytes.size())
    raise(ErrorKind::Format, "trailing bytes after checkpoint payload: " + path);
  return ck;
}

}  // namespace solo
