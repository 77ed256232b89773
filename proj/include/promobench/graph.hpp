#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promobench/rng.hpp"
#include "promobench/tensor.hpp"

namespace promobench::num {

enum class DropoutMode { kOff, kTrain, kMcInference };

// Trainable tensor with gradient and Adam moment state, all shape-identical.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  int64_t step_count = 0;

  Parameter(std::string n, Tensor init);
};

enum class OpKind : uint8_t {
  kInput,        // dense input set by the caller
  kIntInput,     // integer input set by the caller (ids, labels)
  kDense,        // y = x W + b
  kRelu,         // y = max(0, x); gradient at exactly 0 is 0
  kEmbed,        // row gather from a table parameter; backward scatter-adds
  kConcat,       // column-wise concat of same-batch tensors
  kDropout,      // inverted dropout: zero w.p. p, scale survivors by 1/(1-p)
  kAdd,          // elementwise sum of two same-shape tensors
  kSoftmaxXent,  // stabilized softmax + mean negative log-likelihood
};

struct Node {
  OpKind kind{};
  std::string label;
  std::vector<int> in;  // upstream node ids
  int w = -1;           // dense weight / embedding table parameter slot
  int b = -1;           // dense bias parameter slot
  double p = 0.0;       // dropout probability
  bool mc_eligible = false;  // participates in mc_inference mode
  int64_t width = 0;         // kInput feature width
};

// Per-pass activation storage. One Workspace per concurrent forward pass;
// the Graph itself stays read-only during inference.
struct Workspace {
  std::vector<Tensor> out;
  std::vector<std::vector<int64_t>> ints;
  std::vector<Tensor> grad;
  std::vector<Tensor> mask;  // dropout masks; empty when the node ran as identity
  double loss = 0.0;
  int64_t batch = 0;
  bool forward_done = false;
};

// Static op list with parameter storage. Acyclic by construction: a node may
// only consume previously added nodes.
class Graph {
 public:
  int add_param(std::string name, Tensor init);

  int add_input(std::string label, int64_t width);
  int add_int_input(std::string label);
  int add_dense(int x, int w_param, int b_param, std::string label = "dense");
  int add_relu(int x);
  int add_embedding(int table_param, int ids_node, std::string label = "embed");
  int add_concat(std::vector<int> xs);
  int add_dropout(int x, double p, bool mc_eligible);
  int add_add(int a, int b);
  int add_softmax_xent(int logits, int labels);

  int node_count() const { return static_cast<int>(nodes.size()); }

  void prepare(Workspace& ws) const;  // sizes the per-node slots
  void set_input(Workspace& ws, int node, Tensor values) const;
  void set_int_input(Workspace& ws, int node, std::vector<int64_t> ids) const;

  std::vector<Node> nodes;
  std::vector<Parameter> params;
  int loss_node = -1;

 private:
  int check_node(int id) const;
};

// Executes nodes [from_node, upto_node] in order. The default runs the whole
// graph; partial ranges are used by the bandit's cached-prefix evaluation.
// Stochastic dropout needs `rng`; ws.forward_done is set only by a full run
// ending at the loss node.
void forward(const Graph& g, Workspace& ws, DropoutMode mode, rng::Xoshiro256pp* rng = nullptr,
             int from_node = 0, int upto_node = -1);

// Reverse-mode accumulation over the whole graph. Gradients of parameters used
// by several nodes sum; nodes not feeding the loss contribute exactly zero.
void backward(Graph& g, Workspace& ws);

void zero_grad(Graph& g);

// Bias-corrected Adam update on every parameter; increments step counts.
// Throws TrainError on any non-finite gradient, leaving values untouched.
void adam_step(Graph& g, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Row-wise stabilized softmax (max subtraction).
void softmax_rows(const Tensor& logits, Tensor& probs);

// Argmax with deterministic tie-break: the lowest index wins.
int64_t argmax_row(const Tensor& t, int64_t row);

// Initializers used by the model assemblies: dense weights are
// Uniform(+-sqrt(6/(fan_in+fan_out))), biases zero, embeddings Normal(0, 0.05).
Tensor glorot_uniform(int64_t fan_in, int64_t fan_out, rng::Xoshiro256pp& rng);
Tensor gaussian_init(std::vector<int64_t> shape, double sd, rng::Xoshiro256pp& rng);

}  // namespace promobench::num
