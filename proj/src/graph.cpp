#include "promobench/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace promobench::num {

namespace {

// Below this many multiply-adds a dense op runs single-threaded; threading
// must never change the math, only the chunking (each output element is
// produced by exactly one thread with a fixed accumulation order).
constexpr int64_t kParallelFlopThreshold = 1 << 18;

int threads_for(int64_t flops) {
  if (flops < kParallelFlopThreshold) return 1;
  return default_thread_count();
}

}  // namespace

Parameter::Parameter(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(Tensor::zeros(value.shape())),
      adam_m(Tensor::zeros(value.shape())),
      adam_v(Tensor::zeros(value.shape())) {}

int Graph::add_param(std::string name, Tensor init) {
  params.emplace_back(std::move(name), std::move(init));
  return static_cast<int>(params.size()) - 1;
}

int Graph::check_node(int id) const {
  if (id < 0 || id >= node_count()) throw UsageError("graph node id out of range");
  return id;
}

int Graph::add_input(std::string label, int64_t width) {
  Node n;
  n.kind = OpKind::kInput;
  n.label = std::move(label);
  n.width = width;
  nodes.push_back(std::move(n));
  return node_count() - 1;
}

int Graph::add_int_input(std::string label) {
  Node n;
  n.kind = OpKind::kIntInput;
  n.label = std::move(label);
  nodes.push_back(std::move(n));
  return node_count() - 1;
}

int Graph::add_dense(int x, int w_param, int b_param, std::string label) {
  Node n;
  n.kind = OpKind::kDense;
  n.label = std::move(label);
  n.in = {check_node(x)};
  n.w = w_param;
  n.b = b_param;
  nodes.push_back(std::move(n));
  return node_count() - 1;
}

int Graph::add_relu(int x) {
  Node n;
  n.kind = OpKind::kRelu;
  n.label = "relu";
  n.in = {check_node(x)};
  nodes.push_back(std::move(n));
  return node_count() - 1;
}

int Graph::add_embedding(int table_param, int ids_node, std::string label) {
  Node n;
  n.kind = OpKind::kEmbed;
  n.label = std::move(label);
  n.in = {check_node(ids_node)};
  n.w = table_param;
  nodes.push_back(std::move(n));
  return node_count() - 1;
}

int Graph::add_concat(std::vector<int> xs) {
  Node n;
  n.kind = OpKind::kConcat;
  n.label = "concat";
  for (int x : xs) check_node(x);
  n.in = std::move(xs);
  nodes.push_back(std::move(n));
  return node_count() - 1;
}

int Graph::add_dropout(int x, double p, bool mc_eligible) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  Node n;
  n.kind = OpKind::kDropout;
  n.label = "dropout";
  n.in = {check_node(x)};
  n.p = p;
  n.mc_eligible = mc_eligible;
  nodes.push_back(std::move(n));
  return node_count() - 1;
}

int Graph::add_add(int a, int b) {
  Node n;
  n.kind = OpKind::kAdd;
  n.label = "add";
  n.in = {check_node(a), check_node(b)};
  nodes.push_back(std::move(n));
  return node_count() - 1;
}

int Graph::add_softmax_xent(int logits, int labels) {
  Node n;
  n.kind = OpKind::kSoftmaxXent;
  n.label = "softmax_xent";
  n.in = {check_node(logits), check_node(labels)};
  nodes.push_back(std::move(n));
  loss_node = node_count() - 1;
  return loss_node;
}

void Graph::prepare(Workspace& ws) const {
  ws.out.resize(nodes.size());
  ws.ints.resize(nodes.size());
  ws.grad.resize(nodes.size());
  ws.mask.resize(nodes.size());
  ws.forward_done = false;
}

void Graph::set_input(Workspace& ws, int node, Tensor values) const {
  if (nodes[static_cast<size_t>(check_node(node))].kind != OpKind::kInput) {
    throw UsageError("set_input on a non-input node");
  }
  if (values.rank() != 2 || values.dim(1) != nodes[static_cast<size_t>(node)].width) {
    throw ShapeError("input '" + nodes[static_cast<size_t>(node)].label + "' expects width " +
                     std::to_string(nodes[static_cast<size_t>(node)].width) + ", got " +
                     values.shape_string());
  }
  ws.out[static_cast<size_t>(node)] = std::move(values);
  ws.forward_done = false;
}

void Graph::set_int_input(Workspace& ws, int node, std::vector<int64_t> ids) const {
  if (nodes[static_cast<size_t>(check_node(node))].kind != OpKind::kIntInput) {
    throw UsageError("set_int_input on a non-int-input node");
  }
  ws.ints[static_cast<size_t>(node)] = std::move(ids);
  ws.forward_done = false;
}

namespace {

void dense_forward(const Node& n, const Graph& g, Workspace& ws, int id) {
  const Tensor& x = ws.out[static_cast<size_t>(n.in[0])];
  const Tensor& W = g.params[static_cast<size_t>(n.w)].value;
  const Tensor& b = g.params[static_cast<size_t>(n.b)].value;
  if (x.rank() != 2 || x.dim(1) != W.dim(0)) {
    throw ShapeError("dense '" + n.label + "': input " + x.shape_string() + " vs weight " +
                     W.shape_string());
  }
  if (b.size() != W.dim(1)) {
    throw ShapeError("dense '" + n.label + "': bias " + b.shape_string() + " vs weight " +
                     W.shape_string());
  }
  const int64_t batch = x.dim(0), in = W.dim(0), out = W.dim(1);
  Tensor& y = ws.out[static_cast<size_t>(id)];
  y.resize({batch, out});
  const double* xd = x.data();
  const double* wd = W.data();
  const double* bd = b.data();
  double* yd = y.data();
  parallel_for(
      batch,
      [&](int64_t lo, int64_t hi) {
        for (int64_t r = lo; r < hi; ++r) {
          const double* xr = xd + r * in;
          double* yr = yd + r * out;
          std::memcpy(yr, bd, static_cast<size_t>(out) * sizeof(double));
          for (int64_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            if (xi == 0.0) continue;
            const double* wr = wd + i * out;
            for (int64_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
          }
        }
      },
      threads_for(batch * in * out));
}

void dense_backward(const Node& n, Graph& g, Workspace& ws, int id) {
  const Tensor& x = ws.out[static_cast<size_t>(n.in[0])];
  const Tensor& dy = ws.grad[static_cast<size_t>(id)];
  Parameter& W = g.params[static_cast<size_t>(n.w)];
  Parameter& B = g.params[static_cast<size_t>(n.b)];
  const int64_t batch = x.dim(0), in = W.value.dim(0), out = W.value.dim(1);
  const double* xd = x.data();
  const double* dyd = dy.data();

  // dW[i,:] += sum_b x[b,i] dy[b,:], one weight row per worker.
  double* dwd = W.grad.data();
  parallel_for(
      in,
      [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
          double* dwr = dwd + i * out;
          for (int64_t r = 0; r < batch; ++r) {
            const double xi = xd[r * in + i];
            if (xi == 0.0) continue;
            const double* dyr = dyd + r * out;
            for (int64_t o = 0; o < out; ++o) dwr[o] += xi * dyr[o];
          }
        }
      },
      threads_for(batch * in * out));

  double* dbd = B.grad.data();
  for (int64_t r = 0; r < batch; ++r) {
    const double* dyr = dyd + r * out;
    for (int64_t o = 0; o < out; ++o) dbd[o] += dyr[o];
  }

  if (g.nodes[static_cast<size_t>(n.in[0])].kind != OpKind::kInput) {
    Tensor& dx = ws.grad[static_cast<size_t>(n.in[0])];
    const double* wd = W.value.data();
    double* dxd = dx.data();
    parallel_for(
        batch,
        [&](int64_t lo, int64_t hi) {
          for (int64_t r = lo; r < hi; ++r) {
            const double* dyr = dyd + r * out;
            double* dxr = dxd + r * in;
            for (int64_t i = 0; i < in; ++i) {
              const double* wr = wd + i * out;
              double acc = 0.0;
              for (int64_t o = 0; o < out; ++o) acc += dyr[o] * wr[o];
              dxr[i] += acc;
            }
          }
        },
        threads_for(batch * in * out));
  }
}

void embed_forward(const Node& n, const Graph& g, Workspace& ws, int id) {
  const std::vector<int64_t>& ids = ws.ints[static_cast<size_t>(n.in[0])];
  const Tensor& table = g.params[static_cast<size_t>(n.w)].value;
  const int64_t rows = table.dim(0), dim = table.dim(1);
  Tensor& y = ws.out[static_cast<size_t>(id)];
  y.resize({static_cast<int64_t>(ids.size()), dim});
  double* yd = y.data();
  const double* td = table.data();
  for (size_t r = 0; r < ids.size(); ++r) {
    const int64_t idx = ids[r];
    if (idx < 0 || idx >= rows) {
      throw DataError("embedding '" + n.label + "': id " + std::to_string(idx) +
                      " out of range [0, " + std::to_string(rows) + ")");
    }
    std::memcpy(yd + static_cast<int64_t>(r) * dim, td + idx * dim,
                static_cast<size_t>(dim) * sizeof(double));
  }
}

void softmax_xent_forward(const Node& n, const Graph& g, Workspace& ws, int id) {
  (void)g;
  const Tensor& logits = ws.out[static_cast<size_t>(n.in[0])];
  const std::vector<int64_t>& labels = ws.ints[static_cast<size_t>(n.in[1])];
  const int64_t batch = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != batch) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(batch));
  }
  Tensor& probs = ws.out[static_cast<size_t>(id)];
  probs.resize({batch, k});
  const double* ld = logits.data();
  double* pd = probs.data();
  double loss = 0.0;
  for (int64_t r = 0; r < batch; ++r) {
    const int64_t label = labels[static_cast<size_t>(r)];
    if (label < 0 || label >= k) {
      throw DataError("softmax_xent: label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(k) + ")");
    }
    const double* lr = ld + r * k;
    double* pr = pd + r * k;
    double m = lr[0];
    for (int64_t c = 1; c < k; ++c) m = std::max(m, lr[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < k; ++c) {
      pr[c] = std::exp(lr[c] - m);
      sum += pr[c];
    }
    const double inv = 1.0 / sum;
    for (int64_t c = 0; c < k; ++c) pr[c] *= inv;
    // log prob of the true class via log-sum-exp, safe against underflow
    loss += std::log(sum) + m - lr[label];
  }
  ws.loss = loss / static_cast<double>(batch);
}

}  // namespace

void forward(const Graph& g, Workspace& ws, DropoutMode mode, rng::Xoshiro256pp* rng,
             int from_node, int upto_node) {
  if (ws.out.size() != g.nodes.size()) g.prepare(ws);
  const int last = upto_node < 0 ? g.node_count() - 1 : upto_node;
  if (from_node < 0 || last >= g.node_count() || from_node > last) {
    throw UsageError("forward: node range out of bounds");
  }
  for (int id = from_node; id <= last; ++id) {
    const Node& n = g.nodes[static_cast<size_t>(id)];
    switch (n.kind) {
      case OpKind::kInput: {
        const Tensor& x = ws.out[static_cast<size_t>(id)];
        if (x.rank() != 2) throw UsageError("input '" + n.label + "' not bound before forward");
        ws.batch = x.dim(0);
        break;
      }
      case OpKind::kIntInput:
        // validated where consumed (embedding range check, xent label count)
        break;
      case OpKind::kDense:
        dense_forward(n, g, ws, id);
        break;
      case OpKind::kRelu: {
        const Tensor& x = ws.out[static_cast<size_t>(n.in[0])];
        Tensor& y = ws.out[static_cast<size_t>(id)];
        y.resize(x.shape());
        const double* xd = x.data();
        double* yd = y.data();
        const int64_t sz = x.size();
        for (int64_t i = 0; i < sz; ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
        break;
      }
      case OpKind::kEmbed:
        embed_forward(n, g, ws, id);
        break;
      case OpKind::kConcat: {
        int64_t batch = ws.out[static_cast<size_t>(n.in[0])].dim(0);
        int64_t width = 0;
        for (int src : n.in) {
          const Tensor& x = ws.out[static_cast<size_t>(src)];
          if (x.dim(0) != batch) {
            throw ShapeError("concat: batch mismatch " + x.shape_string());
          }
          width += x.dim(1);
        }
        Tensor& y = ws.out[static_cast<size_t>(id)];
        y.resize({batch, width});
        double* yd = y.data();
        int64_t off = 0;
        for (int src : n.in) {
          const Tensor& x = ws.out[static_cast<size_t>(src)];
          const int64_t w = x.dim(1);
          const double* xd = x.data();
          for (int64_t r = 0; r < batch; ++r) {
            std::memcpy(yd + r * width + off, xd + r * w, static_cast<size_t>(w) * sizeof(double));
          }
          off += w;
        }
        break;
      }
      case OpKind::kDropout: {
        const Tensor& x = ws.out[static_cast<size_t>(n.in[0])];
        Tensor& y = ws.out[static_cast<size_t>(id)];
        Tensor& mask = ws.mask[static_cast<size_t>(id)];
        const bool active = n.p > 0.0 && (mode == DropoutMode::kTrain ||
                                          (mode == DropoutMode::kMcInference && n.mc_eligible));
        if (!active) {
          y = x;
          mask = Tensor();
          break;
        }
        if (rng == nullptr) throw UsageError("stochastic dropout requires an rng");
        y.resize(x.shape());
        mask.resize(x.shape());
        const double scale = 1.0 / (1.0 - n.p);
        const double* xd = x.data();
        double* yd = y.data();
        double* md = mask.data();
        const int64_t sz = x.size();
        for (int64_t i = 0; i < sz; ++i) {
          md[i] = rng->uniform01() < n.p ? 0.0 : scale;
          yd[i] = xd[i] * md[i];
        }
        break;
      }
      case OpKind::kAdd: {
        const Tensor& a = ws.out[static_cast<size_t>(n.in[0])];
        const Tensor& b = ws.out[static_cast<size_t>(n.in[1])];
        if (!a.same_shape(b)) {
          throw ShapeError("add: " + a.shape_string() + " vs " + b.shape_string());
        }
        Tensor& y = ws.out[static_cast<size_t>(id)];
        y.resize(a.shape());
        const double* ad = a.data();
        const double* bd = b.data();
        double* yd = y.data();
        const int64_t sz = a.size();
        for (int64_t i = 0; i < sz; ++i) yd[i] = ad[i] + bd[i];
        break;
      }
      case OpKind::kSoftmaxXent:
        softmax_xent_forward(n, g, ws, id);
        break;
    }
  }
  ws.forward_done = (from_node == 0 && g.loss_node >= 0 && last >= g.loss_node);
}

void backward(Graph& g, Workspace& ws) {
  if (!ws.forward_done) throw UsageError("backward called before a full forward pass");
  if (g.loss_node < 0) throw UsageError("graph has no loss node");

  for (int id = 0; id <= g.loss_node; ++id) {
    const Node& n = g.nodes[static_cast<size_t>(id)];
    Tensor& grad = ws.grad[static_cast<size_t>(id)];
    if (n.kind == OpKind::kIntInput) continue;
    grad.resize(ws.out[static_cast<size_t>(id)].shape());
  }

  for (int id = g.loss_node; id >= 0; --id) {
    const Node& n = g.nodes[static_cast<size_t>(id)];
    switch (n.kind) {
      case OpKind::kInput:
      case OpKind::kIntInput:
        break;
      case OpKind::kDense:
        dense_backward(n, g, ws, id);
        break;
      case OpKind::kRelu: {
        const Tensor& x = ws.out[static_cast<size_t>(n.in[0])];
        const Tensor& dy = ws.grad[static_cast<size_t>(id)];
        Tensor& dx = ws.grad[static_cast<size_t>(n.in[0])];
        const double* xd = x.data();
        const double* dyd = dy.data();
        double* dxd = dx.data();
        const int64_t sz = x.size();
        for (int64_t i = 0; i < sz; ++i) {
          if (xd[i] > 0.0) dxd[i] += dyd[i];
        }
        break;
      }
      case OpKind::kEmbed: {
        const std::vector<int64_t>& ids = ws.ints[static_cast<size_t>(n.in[0])];
        const Tensor& dy = ws.grad[static_cast<size_t>(id)];
        Parameter& table = g.params[static_cast<size_t>(n.w)];
        const int64_t dim = table.value.dim(1);
        double* td = table.grad.data();
        const double* dyd = dy.data();
        for (size_t r = 0; r < ids.size(); ++r) {
          double* row = td + ids[r] * dim;
          const double* dyr = dyd + static_cast<int64_t>(r) * dim;
          for (int64_t c = 0; c < dim; ++c) row[c] += dyr[c];
        }
        break;
      }
      case OpKind::kConcat: {
        const Tensor& dy = ws.grad[static_cast<size_t>(id)];
        const int64_t batch = dy.dim(0), width = dy.dim(1);
        const double* dyd = dy.data();
        int64_t off = 0;
        for (int src : n.in) {
          Tensor& dx = ws.grad[static_cast<size_t>(src)];
          const int64_t w = dx.dim(1);
          double* dxd = dx.data();
          for (int64_t r = 0; r < batch; ++r) {
            const double* dyr = dyd + r * width + off;
            double* dxr = dxd + r * w;
            for (int64_t c = 0; c < w; ++c) dxr[c] += dyr[c];
          }
          off += w;
        }
        break;
      }
      case OpKind::kDropout: {
        const Tensor& dy = ws.grad[static_cast<size_t>(id)];
        const Tensor& mask = ws.mask[static_cast<size_t>(id)];
        Tensor& dx = ws.grad[static_cast<size_t>(n.in[0])];
        const double* dyd = dy.data();
        double* dxd = dx.data();
        const int64_t sz = dy.size();
        if (mask.size() == 0) {
          for (int64_t i = 0; i < sz; ++i) dxd[i] += dyd[i];
        } else {
          const double* md = mask.data();
          for (int64_t i = 0; i < sz; ++i) dxd[i] += dyd[i] * md[i];
        }
        break;
      }
      case OpKind::kAdd: {
        const Tensor& dy = ws.grad[static_cast<size_t>(id)];
        const double* dyd = dy.data();
        for (int branch = 0; branch < 2; ++branch) {
          Tensor& dx = ws.grad[static_cast<size_t>(n.in[branch])];
          double* dxd = dx.data();
          const int64_t sz = dy.size();
          for (int64_t i = 0; i < sz; ++i) dxd[i] += dyd[i];
        }
        break;
      }
      case OpKind::kSoftmaxXent: {
        // d loss / d logits = (probs - onehot) / batch
        const Tensor& probs = ws.out[static_cast<size_t>(id)];
        const std::vector<int64_t>& labels = ws.ints[static_cast<size_t>(n.in[1])];
        Tensor& dlogits = ws.grad[static_cast<size_t>(n.in[0])];
        const int64_t batch = probs.dim(0), k = probs.dim(1);
        const double invb = 1.0 / static_cast<double>(batch);
        const double* pd = probs.data();
        double* dld = dlogits.data();
        for (int64_t r = 0; r < batch; ++r) {
          const double* pr = pd + r * k;
          double* dlr = dld + r * k;
          for (int64_t c = 0; c < k; ++c) dlr[c] += pr[c] * invb;
          dlr[labels[static_cast<size_t>(r)]] -= invb;
        }
        break;
      }
    }
  }
}

void zero_grad(Graph& g) {
  for (auto& p : g.params) p.grad.fill(0.0);
}

void adam_step(Graph& g, double lr, double beta1, double beta2, double eps) {
  for (auto& p : g.params) {
    const double* gd = p.grad.data();
    const int64_t sz = p.grad.size();
    for (int64_t i = 0; i < sz; ++i) {
      if (!std::isfinite(gd[i])) {
        throw TrainError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
    p.step_count += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p.step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p.step_count));
    double* vd = p.value.data();
    double* md = p.adam_m.data();
    double* vvd = p.adam_v.data();
    for (int64_t i = 0; i < sz; ++i) {
      const double grad = gd[i];
      md[i] = beta1 * md[i] + (1.0 - beta1) * grad;
      vvd[i] = beta2 * vvd[i] + (1.0 - beta2) * grad * grad;
      const double mhat = md[i] / bc1;
      const double vhat = vvd[i] / bc2;
      vd[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void softmax_rows(const Tensor& logits, Tensor& probs) {
  const int64_t batch = logits.dim(0), k = logits.dim(1);
  probs.resize({batch, k});
  const double* ld = logits.data();
  double* pd = probs.data();
  for (int64_t r = 0; r < batch; ++r) {
    const double* lr = ld + r * k;
    double* pr = pd + r * k;
    double m = lr[0];
    for (int64_t c = 1; c < k; ++c) m = std::max(m, lr[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < k; ++c) {
      pr[c] = std::exp(lr[c] - m);
      sum += pr[c];
    }
    const double inv = 1.0 / sum;
    for (int64_t c = 0; c < k; ++c) pr[c] *= inv;
  }
}

int64_t argmax_row(const Tensor& t, int64_t row) {
  const int64_t k = t.dim(1);
  const double* d = t.data() + row * k;
  int64_t best = 0;
  for (int64_t c = 1; c < k; ++c) {
    if (d[c] > d[best]) best = c;
  }
  return best;
}

Tensor glorot_uniform(int64_t fan_in, int64_t fan_out, rng::Xoshiro256pp& rng) {
  Tensor t({fan_in, fan_out});
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  double* d = t.data();
  const int64_t sz = t.size();
  for (int64_t i = 0; i < sz; ++i) d[i] = (2.0 * rng.uniform01() - 1.0) * bound;
  return t;
}

Tensor gaussian_init(std::vector<int64_t> shape, double sd, rng::Xoshiro256pp& rng) {
  Tensor t(std::move(shape));
  double* d = t.data();
  const int64_t sz = t.size();
  for (int64_t i = 0; i < sz; ++i) d[i] = rng.gaussian(0.0, sd);
  return t;
}

}  // namespace promobench::num
