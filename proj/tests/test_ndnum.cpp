#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "promobench/graph.hpp"

using namespace promobench;
using num::DropoutMode;
using num::Graph;
using num::Tensor;
using num::Workspace;

namespace {

// dense(x) -> xent scaffold shared by several backward tests
struct TinyNet {
  Graph g;
  int in, labels, loss;
  TinyNet(int64_t in_w, int64_t out_w, rng::Xoshiro256pp& rng) {
    in = g.add_input("x", in_w);
    const int w = g.add_param("w", num::glorot_uniform(in_w, out_w, rng));
    const int b = g.add_param("b", Tensor::zeros({out_w}));
    const int dense = g.add_dense(in, w, b);
    labels = g.add_int_input("labels");
    loss = g.add_softmax_xent(dense, labels);
  }
};

}  // namespace

TEST_CASE("dense with identity weights passes the input through") {
  Graph g;
  const int x = g.add_input("x", 2);
  const int w = g.add_param("w", Tensor::from({2, 2}, {1, 0, 0, 1}));
  const int b = g.add_param("b", Tensor::from({2}, {0, 0}));
  const int y = g.add_dense(x, w, b);
  Workspace ws;
  g.prepare(ws);
  g.set_input(ws, x, Tensor::from({1, 2}, {1, 2}));
  forward(g, ws, DropoutMode::kOff);
  CHECK(ws.out[y].at(0, 0) == 1.0);
  CHECK(ws.out[y].at(0, 1) == 2.0);
}

TEST_CASE("dense with zero weights exposes the bias") {
  Graph g;
  const int x = g.add_input("x", 2);
  const int w = g.add_param("w", Tensor::from({2, 2}, {0, 0, 0, 0}));
  const int b = g.add_param("b", Tensor::from({2}, {3, 4}));
  const int y = g.add_dense(x, w, b);
  Workspace ws;
  g.prepare(ws);
  g.set_input(ws, x, Tensor::from({1, 2}, {1, 2}));
  forward(g, ws, DropoutMode::kOff);
  CHECK(ws.out[y].at(0, 0) == 3.0);
  CHECK(ws.out[y].at(0, 1) == 4.0);
}

TEST_CASE("dense matches the naive triple-loop product") {
  rng::Xoshiro256pp rng(5);
  Graph g;
  const int x = g.add_input("x", 3);
  Tensor wv({3, 5}), bv({5}), xv({4, 3});
  for (auto* t : {&wv, &bv, &xv}) {
    for (auto& v : t->values()) v = rng.gaussian(0, 1);
  }
  const int w = g.add_param("w", wv);
  const int b = g.add_param("b", bv);
  const int y = g.add_dense(x, w, b);
  Workspace ws;
  g.prepare(ws);
  g.set_input(ws, x, xv);
  forward(g, ws, DropoutMode::kOff);
  const Tensor expect = oracles::naive_matmul_bias(xv, wv, bv);
  for (int64_t r = 0; r < 4; ++r) {
    for (int64_t c = 0; c < 5; ++c) {
      CHECK(ws.out[y].at(r, c) == doctest::Approx(expect.at(r, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("dense rejects mismatched shapes naming both") {
  Graph g;
  const int x = g.add_input("x", 3);
  const int w = g.add_param("w", Tensor::zeros({2, 2}));
  const int b = g.add_param("b", Tensor::zeros({2}));
  g.add_dense(x, w, b);
  Workspace ws;
  g.prepare(ws);
  g.set_input(ws, x, Tensor::zeros({1, 3}));
  CHECK_THROWS_WITH_AS(forward(g, ws, DropoutMode::kOff),
                       doctest::Contains("[1, 3]"), ShapeError);
}

TEST_CASE("relu clamps negatives and is idempotent") {
  Graph g;
  const int x = g.add_input("x", 3);
  const int r1 = g.add_relu(x);
  const int r2 = g.add_relu(r1);
  Workspace ws;
  g.prepare(ws);
  g.set_input(ws, x, Tensor::from({1, 3}, {-1, 0, 2}));
  forward(g, ws, DropoutMode::kOff);
  CHECK(ws.out[r1].values() == std::vector<double>{0, 0, 2});
  CHECK(ws.out[r2].values() == ws.out[r1].values());

  rng::Xoshiro256pp rng(3);
  Tensor rand({4, 3});
  for (auto& v : rand.values()) v = rng.gaussian(0, 2);
  g.set_input(ws, x, rand);
  forward(g, ws, DropoutMode::kOff);
  CHECK(ws.out[r2].values() == ws.out[r1].values());
}

TEST_CASE("relu gradient is 1 above zero, 0 at and below zero") {
  Graph g;
  const int x = g.add_input("x", 3);
  const int r = g.add_relu(x);
  // sum the relu output via a fixed dense row so the label gradient is known
  const int w = g.add_param("w", Tensor::from({3, 2}, {1, 0, 1, 0, 1, 0}));
  const int b = g.add_param("b", Tensor::zeros({2}));
  const int dense = g.add_dense(r, w, b);
  const int labels = g.add_int_input("labels");
  g.add_softmax_xent(dense, labels);
  Workspace ws;
  g.prepare(ws);
  g.set_input(ws, x, Tensor::from({1, 3}, {-1.0, 0.0, 2.0}));
  g.set_int_input(ws, labels, {0});
  forward(g, ws, DropoutMode::kOff);
  num::zero_grad(g);
  backward(g, ws);
  // upstream gradient into relu is nonzero for the summed column; check the
  // pass-through pattern only
  CHECK(ws.grad[r].at(0, 0) != 0.0);  // upstream reaches the relu output
  CHECK(ws.grad[x].at(0, 0) == 0.0);  // x < 0 blocked
  CHECK(ws.grad[x].at(0, 1) == 0.0);  // x == 0 blocked by convention
  CHECK(ws.grad[x].at(0, 2) == ws.grad[r].at(0, 2));
}

TEST_CASE("embedding gathers rows and scatter-adds gradients") {
  Graph g;
  const int ids = g.add_int_input("ids");
  const int table = g.add_param("table", Tensor::from({2, 2}, {1, 1, 2, 2}));
  const int y = g.add_embedding(table, ids);
  const int w = g.add_param("w", Tensor::from({2, 2}, {1, 0, 0, 1}));
  const int b = g.add_param("b", Tensor::zeros({2}));
  const int dense = g.add_dense(y, w, b);
  const int labels = g.add_int_input("labels");
  g.add_softmax_xent(dense, labels);

  Workspace ws;
  g.prepare(ws);
  g.set_int_input(ws, ids, {1, 0, 1});
  g.set_int_input(ws, labels, {0, 0, 0});
  forward(g, ws, DropoutMode::kOff);
  CHECK(ws.out[y].at(0, 0) == 2.0);
  CHECK(ws.out[y].at(1, 0) == 1.0);
  CHECK(ws.out[y].at(2, 1) == 2.0);

  // scatter-add count: row 1 touched twice, row 0 once
  num::zero_grad(g);
  backward(g, ws);
  Tensor& dy = ws.grad[y];
  const double row1_expected = dy.at(0, 0) + dy.at(2, 0);
  CHECK(g.params[table].grad.at(1, 0) == doctest::Approx(row1_expected));
  CHECK(g.params[table].grad.at(0, 0) == doctest::Approx(dy.at(1, 0)));
}

TEST_CASE("embedding rejects out-of-range ids naming the id") {
  Graph g;
  const int ids = g.add_int_input("ids");
  const int table = g.add_param("table", Tensor::zeros({5, 3}));
  g.add_embedding(table, ids);
  Workspace ws;
  g.prepare(ws);
  g.set_int_input(ws, ids, {7});
  CHECK_THROWS_WITH_AS(forward(g, ws, DropoutMode::kOff), doctest::Contains("7"), DataError);
}

TEST_CASE("embedding gradients match finite differences on a 5x3 table") {
  rng::Xoshiro256pp rng(17);
  Graph g;
  const int ids = g.add_int_input("ids");
  const int table = g.add_param("table", num::gaussian_init({5, 3}, 0.5, rng));
  const int emb = g.add_embedding(table, ids);
  const int w = g.add_param("w", num::glorot_uniform(3, 4, rng));
  const int b = g.add_param("b", Tensor::zeros({4}));
  const int dense = g.add_dense(emb, w, b);
  const int labels = g.add_int_input("labels");
  g.add_softmax_xent(dense, labels);

  Workspace ws;
  auto loss_of = [&]() {
    g.prepare(ws);
    g.set_int_input(ws, ids, {0, 3, 3, 1});
    g.set_int_input(ws, labels, {1, 0, 2, 3});
    forward(g, ws, DropoutMode::kOff);
    return ws.loss;
  };
  loss_of();
  num::zero_grad(g);
  backward(g, ws);
  const auto res = oracles::finite_difference_check(g, loss_of);
  CHECK(res.max_rel_err < 1e-4);
  CHECK(res.checked == 5 * 3 + 3 * 4 + 4);
}

TEST_CASE("dropout p=0 is the identity in every mode") {
  Graph g;
  const int x = g.add_input("x", 4);
  const int d = g.add_dropout(x, 0.0, true);
  Workspace ws;
  g.prepare(ws);
  rng::Xoshiro256pp rng(1);
  const Tensor in = Tensor::from({2, 4}, {1, -2, 3, -4, 5, -6, 7, -8});
  for (auto mode : {DropoutMode::kOff, DropoutMode::kTrain, DropoutMode::kMcInference}) {
    g.set_input(ws, x, in);
    forward(g, ws, mode, &rng);
    CHECK(ws.out[d].values() == in.values());
  }
}

TEST_CASE("dropout off mode is bit-for-bit identity") {
  Graph g;
  const int x = g.add_input("x", 8);
  const int d = g.add_dropout(x, 0.3, true);
  Workspace ws;
  g.prepare(ws);
  rng::Xoshiro256pp rng(2);
  Tensor in({4, 8});
  for (auto& v : in.values()) v = rng.gaussian(0, 1);
  g.set_input(ws, x, in);
  forward(g, ws, DropoutMode::kOff, &rng);
  CHECK(ws.out[d].values() == in.values());
}

TEST_CASE("dropout drop fraction concentrates around p") {
  Graph g;
  const int x = g.add_input("x", 1000);
  const int d = g.add_dropout(x, 0.3, false);
  Workspace ws;
  g.prepare(ws);
  Tensor in({1000, 1000});
  in.fill(1.0);
  g.set_input(ws, x, in);
  rng::Xoshiro256pp rng(33);
  forward(g, ws, DropoutMode::kTrain, &rng);
  int64_t dropped = 0;
  for (double v : ws.out[d].values()) {
    if (v == 0.0) ++dropped;
  }
  const double n = 1e6;
  const double frac = static_cast<double>(dropped) / n;
  // binomial concentration: 4 sigma ~ 0.00183, inside the specified 0.002
  const double bound = std::min(0.002, 4.0 * std::sqrt(0.3 * 0.7 / n));
  CHECK(std::abs(frac - 0.3) < bound);
  // survivors are scaled by 1/(1-p)
  for (double v : ws.out[d].values()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.7)));
  }
}

TEST_CASE("inverted dropout preserves expectation within 1%") {
  Graph g;
  const int x = g.add_input("x", 8);
  const int d = g.add_dropout(x, 0.3, true);
  Workspace ws;
  g.prepare(ws);
  Tensor in = Tensor::from({1, 8}, {1.0, -0.5, 2.0, 0.25, -1.5, 3.0, 0.75, -2.25});
  rng::Xoshiro256pp rng(55);
  std::vector<double> mean(8, 0.0);
  const int passes = 100000;
  for (int t = 0; t < passes; ++t) {
    g.set_input(ws, x, in);
    forward(g, ws, DropoutMode::kMcInference, &rng);
    for (int i = 0; i < 8; ++i) mean[i] += ws.out[d].values()[i];
  }
  for (int i = 0; i < 8; ++i) {
    mean[i] /= passes;
    CHECK(std::abs(mean[i] - in.values()[i]) < 0.01 * std::abs(in.values()[i]) + 1e-12);
  }
}

TEST_CASE("dropout probability outside [0,1) is rejected") {
  Graph g;
  const int x = g.add_input("x", 2);
  CHECK_THROWS_AS(g.add_dropout(x, 1.0, false), ConfigError);
  CHECK_THROWS_AS(g.add_dropout(x, -0.1, false), ConfigError);
}

TEST_CASE("softmax_xent on uniform logits gives ln k and flat probs") {
  rng::Xoshiro256pp rng(1);
  TinyNet net(4, 10, rng);
  for (auto& p : net.g.params) p.value.fill(0.0);
  Workspace ws;
  net.g.prepare(ws);
  net.g.set_input(ws, net.in, Tensor::from({1, 4}, {1, 2, 3, 4}));
  net.g.set_int_input(ws, net.labels, {3});
  forward(net.g, ws, DropoutMode::kOff);
  CHECK(ws.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  for (double p : ws.out[net.loss].values()) CHECK(p == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("softmax_xent survives extreme logits without overflow") {
  Graph g;
  const int x = g.add_input("x", 2);
  const int w = g.add_param("w", Tensor::from({2, 2}, {1, 0, 0, 1}));
  const int b = g.add_param("b", Tensor::zeros({2}));
  const int dense = g.add_dense(x, w, b);
  const int labels = g.add_int_input("labels");
  const int loss = g.add_softmax_xent(dense, labels);
  Workspace ws;
  g.prepare(ws);
  g.set_input(ws, x, Tensor::from({1, 2}, {1000.0, 0.0}));
  g.set_int_input(ws, labels, {0});
  forward(g, ws, DropoutMode::kOff);
  CHECK(ws.out[loss].at(0, 0) == doctest::Approx(1.0));
  CHECK(ws.out[loss].at(0, 1) == doctest::Approx(0.0));
  CHECK(std::isfinite(ws.loss));
}

TEST_CASE("softmax rows sum to one and stay non-negative") {
  rng::Xoshiro256pp rng(77);
  Tensor logits({64, 10});
  for (auto& v : logits.values()) v = rng.gaussian(0, 30);
  Tensor probs;
  num::softmax_rows(logits, probs);
  for (int64_t r = 0; r < 64; ++r) {
    double sum = 0;
    for (int64_t c = 0; c < 10; ++c) {
      CHECK(probs.at(r, c) >= 0.0);
      sum += probs.at(r, c);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax_xent rejects out-of-range labels") {
  rng::Xoshiro256pp rng(2);
  TinyNet net(3, 5, rng);
  Workspace ws;
  net.g.prepare(ws);
  net.g.set_input(ws, net.in, Tensor::zeros({1, 3}));
  net.g.set_int_input(ws, net.labels, {5});
  CHECK_THROWS_AS(forward(net.g, ws, DropoutMode::kOff), DataError);
}

TEST_CASE("softmax_xent gradient matches finite differences on a 3x5 case") {
  rng::Xoshiro256pp rng(23);
  TinyNet net(4, 5, rng);
  Workspace ws;
  auto loss_of = [&]() {
    net.g.prepare(ws);
    Tensor x = Tensor::from({3, 4}, {0.3, -1.2, 0.8, 0.1, 1.7, -0.4, -0.9, 0.6, -0.2, 0.5, 1.1, -1.6});
    net.g.set_input(ws, net.in, x);
    net.g.set_int_input(ws, net.labels, {2, 0, 4});
    forward(net.g, ws, DropoutMode::kOff);
    return ws.loss;
  };
  loss_of();
  num::zero_grad(net.g);
  backward(net.g, ws);
  CHECK(oracles::finite_difference_check(net.g, loss_of).max_rel_err < 1e-4);
}

TEST_CASE("backward before forward is a usage error") {
  rng::Xoshiro256pp rng(3);
  TinyNet net(2, 3, rng);
  Workspace ws;
  net.g.prepare(ws);
  CHECK_THROWS_AS(backward(net.g, ws), UsageError);
}

TEST_CASE("a parameter feeding two branches receives the summed gradient") {
  rng::Xoshiro256pp rng(29);
  Graph g;
  const int x = g.add_input("x", 3);
  const int w = g.add_param("w", num::glorot_uniform(3, 3, rng));
  const int b = g.add_param("b", Tensor::zeros({3}));
  // same (w, b) used twice; add joins the branches
  const int d1 = g.add_dense(x, w, b, "branch1");
  const int d2 = g.add_dense(x, w, b, "branch2");
  const int sum = g.add_add(d1, d2);
  const int labels = g.add_int_input("labels");
  g.add_softmax_xent(sum, labels);

  Workspace ws;
  auto loss_of = [&]() {
    g.prepare(ws);
    g.set_input(ws, x, Tensor::from({2, 3}, {0.1, -0.7, 0.4, 0.9, 0.2, -0.3}));
    g.set_int_input(ws, labels, {1, 2});
    forward(g, ws, DropoutMode::kOff);
    return ws.loss;
  };
  loss_of();
  num::zero_grad(g);
  backward(g, ws);
  CHECK(oracles::finite_difference_check(g, loss_of).max_rel_err < 1e-4);

  // the two branches are identical maps, so the shared gradient is twice one
  // branch's contribution; compare against a single-branch clone
  Graph solo;
  const int sx = solo.add_input("x", 3);
  const int sw = solo.add_param("w", g.params[w].value);
  const int sb = solo.add_param("b", g.params[b].value);
  const int sd = solo.add_dense(sx, sw, sb);
  const int ssum = solo.add_add(sd, sd);
  const int slabels = solo.add_int_input("labels");
  solo.add_softmax_xent(ssum, slabels);
  Workspace sws;
  solo.prepare(sws);
  solo.set_input(sws, sx, Tensor::from({2, 3}, {0.1, -0.7, 0.4, 0.9, 0.2, -0.3}));
  solo.set_int_input(sws, slabels, {1, 2});
  forward(solo, sws, DropoutMode::kOff);
  num::zero_grad(solo);
  backward(solo, sws);
  for (int64_t i = 0; i < g.params[w].grad.size(); ++i) {
    CHECK(g.params[w].grad.values()[i] ==
          doctest::Approx(solo.params[sw].grad.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("a parameter detached from the loss keeps a zero gradient") {
  rng::Xoshiro256pp rng(31);
  Graph g;
  const int x = g.add_input("x", 2);
  const int w = g.add_param("w", num::glorot_uniform(2, 2, rng));
  const int b = g.add_param("b", Tensor::zeros({2}));
  const int dense = g.add_dense(x, w, b);
  // dead branch: computed but never reaches the loss
  const int w_dead = g.add_param("w_dead", num::glorot_uniform(2, 2, rng));
  const int b_dead = g.add_param("b_dead", Tensor::zeros({2}));
  g.add_dense(x, w_dead, b_dead, "dead");
  const int labels = g.add_int_input("labels");
  g.add_softmax_xent(dense, labels);

  Workspace ws;
  g.prepare(ws);
  g.set_input(ws, x, Tensor::from({1, 2}, {1.0, -1.0}));
  g.set_int_input(ws, labels, {0});
  forward(g, ws, DropoutMode::kOff);
  num::zero_grad(g);
  backward(g, ws);
  for (double v : g.params[w_dead].grad.values()) CHECK(v == 0.0);
  for (double v : g.params[b_dead].grad.values()) CHECK(v == 0.0);
  bool any_nonzero = false;
  for (double v : g.params[w].grad.values()) any_nonzero |= (v != 0.0);
  CHECK(any_nonzero);
}

TEST_CASE("gradient check through an active dropout mask") {
  rng::Xoshiro256pp rng(41);
  Graph g;
  const int x = g.add_input("x", 6);
  const int w1 = g.add_param("w1", num::glorot_uniform(6, 8, rng));
  const int b1 = g.add_param("b1", Tensor::zeros({8}));
  const int h = g.add_relu(g.add_dense(x, w1, b1));
  const int drop = g.add_dropout(h, 0.4, true);
  const int w2 = g.add_param("w2", num::glorot_uniform(8, 4, rng));
  const int b2 = g.add_param("b2", Tensor::zeros({4}));
  const int out = g.add_dense(drop, w2, b2);
  const int labels = g.add_int_input("labels");
  g.add_softmax_xent(out, labels);

  Workspace ws;
  Tensor xin({3, 6});
  rng::Xoshiro256pp data_rng(42);
  for (auto& v : xin.values()) v = data_rng.gaussian(0, 1);
  // resetting the mask rng before every pass pins the mask, making the
  // stochastic loss differentiable for the oracle
  auto loss_of = [&]() {
    rng::Xoshiro256pp mask_rng(4242);
    g.prepare(ws);
    g.set_input(ws, x, xin);
    g.set_int_input(ws, labels, {0, 3, 1});
    forward(g, ws, DropoutMode::kTrain, &mask_rng);
    return ws.loss;
  };
  loss_of();
  num::zero_grad(g);
  backward(g, ws);
  CHECK(oracles::finite_difference_check(g, loss_of).max_rel_err < 1e-4);
}

TEST_CASE("operations leave their inputs unmodified") {
  rng::Xoshiro256pp rng(43);
  Graph g;
  const int x = g.add_input("x", 4);
  const int w = g.add_param("w", num::glorot_uniform(4, 4, rng));
  const int b = g.add_param("b", Tensor::zeros({4}));
  const int d = g.add_dense(x, w, b);
  const int r = g.add_relu(d);
  g.add_dropout(r, 0.5, true);
  Workspace ws;
  g.prepare(ws);
  Tensor xin({2, 4});
  for (auto& v : xin.values()) v = rng.gaussian(0, 1);
  const std::vector<double> x_before = xin.values();
  const std::vector<double> w_before = g.params[w].value.values();
  g.set_input(ws, x, xin);
  rng::Xoshiro256pp mask_rng(7);
  forward(g, ws, DropoutMode::kTrain, &mask_rng);
  CHECK(ws.out[x].values() == x_before);
  CHECK(g.params[w].value.values() == w_before);
  const std::vector<double> dense_before = ws.out[d].values();
  (void)dense_before;
  for (double v : ws.out[r].values()) CHECK(std::isfinite(v));
}

TEST_CASE("adam first step moves by lr times the gradient sign") {
  Graph g;
  g.add_param("w", Tensor::from({4}, {1.0, -2.0, 3.0, 0.5}));
  g.params[0].grad = Tensor::from({4}, {0.5, -0.25, 1e-3, 0.0});
  const double lr = 0.01;
  adam_step(g, lr);
  const auto& v = g.params[0].value.values();
  CHECK(v[0] == doctest::Approx(1.0 - lr).epsilon(1e-6));
  CHECK(v[1] == doctest::Approx(-2.0 + lr).epsilon(1e-6));
  CHECK(v[2] == doctest::Approx(3.0 - lr).epsilon(1e-4));
  CHECK(v[3] == 0.5);  // zero gradient leaves the value unchanged
  CHECK(g.params[0].step_count == 1);
}

TEST_CASE("adam converges on a scalar quadratic") {
  // oracle run: 200 steps minimizing (w-3)^2 from w=0 at lr=0.1
  Graph g;
  g.add_param("w", Tensor::from({1}, {0.0}));
  for (int step = 0; step < 200; ++step) {
    const double w = g.params[0].value.values()[0];
    g.params[0].grad.values()[0] = 2.0 * (w - 3.0);
    adam_step(g, 0.1);
  }
  CHECK(std::abs(g.params[0].value.values()[0] - 3.0) < 0.05);
}

TEST_CASE("adam rejects non-finite gradients and keeps values intact") {
  Graph g;
  g.add_param("w", Tensor::from({2}, {1.0, 2.0}));
  g.params[0].grad = Tensor::from({2}, {0.1, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(adam_step(g, 0.01), TrainError);
  CHECK(g.params[0].value.values() == std::vector<double>{1.0, 2.0});
  CHECK(g.params[0].step_count == 0);
}
