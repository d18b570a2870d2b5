#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "knreader/autodiff/checkpoint.hpp"
#include "knreader/autodiff/graph.hpp"
#include "knreader/autodiff/gru.hpp"
#include "knreader/autodiff/ops.hpp"
#include "knreader/autodiff/optimizer.hpp"
#include "knreader/error.hpp"
#include "support.hpp"

using namespace knreader;
using namespace knreader::autodiff;

namespace {

using G = Graph<double>;
using Build = std::function<Var(G&, std::vector<Var>&)>;

Tensor<double> random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor<double> t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Reduces any output to a scalar through fixed random weights: sum(W * out).
Var weighted_sum(G& g, Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& v = g.value(out);
  Var w = g.constant(random_tensor(v.rows(), v.cols(), rng));
  Var prod = g.mul(out, w);
  Var left = g.constant(Tensor<double>(1, v.rows(), 1.0));
  Var right = g.constant(Tensor<double>(v.cols(), 1, 1.0));
  return g.matmul(g.matmul(left, prod), right);
}

double evaluate(ParameterSet<double>& ps, const Build& build, bool backward) {
  ps.zero_grad();
  G g(backward);
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < ps.size(); ++i) leaves.push_back(g.parameter(ps[i]));
  Var out = build(g, leaves);
  Var loss = g.value(out).size() == 1 ? out : weighted_sum(g, out, 99);
  if (backward) g.backward(loss);
  return g.value(loss)[0];
}

// Max relative error between reverse-mode and central differences over all entries.
double gradient_error(ParameterSet<double>& ps, const Build& build, double eps = 1e-5) {
  evaluate(ps, build, true);
  std::vector<Tensor<double>> analytic;
  for (std::size_t i = 0; i < ps.size(); ++i) analytic.push_back(ps[i].grad);
  double worst = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i].trainable) continue;
    for (std::size_t k = 0; k < ps[i].value.size(); ++k) {
      const double keep = ps[i].value[k];
      ps[i].value[k] = keep + eps;
      const double up = evaluate(ps, build, false);
      ps[i].value[k] = keep - eps;
      const double down = evaluate(ps, build, false);
      ps[i].value[k] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

ParameterSet<double> params(const std::vector<std::pair<std::size_t, std::size_t>>& shapes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet<double> ps;
  std::size_t i = 0;
  for (auto [r, c] : shapes) ps.add("p" + std::to_string(i++), random_tensor(r, c, rng));
  return ps;
}

}  // namespace

TEST_CASE("every primitive matches central differences") {
  struct Case {
    const char* name;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    Build build;
  };
  const std::vector<std::size_t> seg = {2, 0, 2, 1};
  const std::vector<std::uint8_t> col_mask = {1, 0, 1, 1};
  const std::vector<double> row_mask = {1, 0, 1};
  const std::vector<Case> cases = {
      {"add", {{3, 4}, {3, 4}}, [](G& g, auto& p) { return g.add(p[0], p[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](G& g, auto& p) { return g.sub(p[0], p[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](G& g, auto& p) { return g.mul(p[0], p[1]); }},
      {"mul self", {{3, 4}}, [](G& g, auto& p) { return g.mul(p[0], p[0]); }},
      {"add_n", {{2, 3}, {2, 3}, {2, 3}}, [](G& g, auto& p) { return g.add_n(p); }},
      {"add_row", {{3, 4}, {1, 4}}, [](G& g, auto& p) { return g.add_row(p[0], p[1]); }},
      {"scale", {{3, 4}}, [](G& g, auto& p) { return g.scale(p[0], -1.7); }},
      {"scale_by", {{3, 4}, {1, 1}}, [](G& g, auto& p) { return g.scale_by(p[0], p[1]); }},
      {"blend_rows", {{3, 4}, {3, 4}}, [&](G& g, auto& p) { return g.blend_rows(p[0], p[1], row_mask); }},
      {"matmul", {{3, 4}, {4, 2}}, [](G& g, auto& p) { return g.matmul(p[0], p[1]); }},
      {"matmul_nt", {{3, 4}, {5, 4}}, [](G& g, auto& p) { return g.matmul_nt(p[0], p[1]); }},
      {"sigmoid", {{3, 4}}, [](G& g, auto& p) { return g.sigmoid(p[0]); }},
      {"tanh", {{3, 4}}, [](G& g, auto& p) { return g.tanh(p[0]); }},
      {"concat_cols", {{3, 2}, {3, 3}}, [](G& g, auto& p) { return g.concat_cols(p[0], p[1]); }},
      {"slice_cols", {{3, 5}}, [](G& g, auto& p) { return g.slice_cols(p[0], 1, 3); }},
      {"slice_rows", {{5, 3}}, [](G& g, auto& p) { return g.slice_rows(p[0], 2, 2); }},
      {"pickup_row", {{4, 3}}, [](G& g, auto& p) { return g.pickup_row(p[0], 3); }},
      {"gather_rows",
       {{3, 4}, {2, 4}},
       [](G& g, auto& p) {
         std::vector<RowRef> refs = {{p[0], 2}, {p[1], 0}, {p[0], 2}, {p[0], 0}};
         return g.gather_rows(refs);
       }},
      {"softmax_rows", {{3, 4}}, [](G& g, auto& p) { return g.softmax_rows(p[0]); }},
      {"masked softmax", {{3, 4}}, [&](G& g, auto& p) { return g.softmax_rows(p[0], col_mask); }},
      {"log_softmax_rows", {{3, 4}}, [](G& g, auto& p) { return g.log_softmax_rows(p[0]); }},
      {"segment_sum", {{4, 1}}, [&](G& g, auto& p) { return g.segment_sum(p[0], seg, 3); }},
      {"pick", {{3, 4}}, [](G& g, auto& p) { return g.pick(p[0], 1, 2); }},
      {"cross entropy", {{1, 5}}, [](G& g, auto& p) { return cross_entropy_from_scores(g, p[0], 3); }},
      {"dropout",
       {{4, 6}},
       [](G& g, auto& p) {
         std::mt19937_64 rng(4);  // same mask on every evaluation
         return g.dropout(p[0], 0.7, true, rng);
       }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    auto ps = params(c.shapes, 17);
    CHECK(gradient_error(ps, c.build) < 1e-6);
  }
}

TEST_CASE("embedding gradients scatter into the table") {
  ParameterSet<double> ps;
  std::mt19937_64 rng(2);
  Parameter<double>& table = ps.add("table", random_tensor(5, 3, rng));
  const std::vector<std::int32_t> ids = {3, 0, 3, 2};
  Build build = [&](G& g, std::vector<Var>&) { return g.tanh(g.embedding(table, ids)); };
  CHECK(gradient_error(ps, build) < 1e-6);
  evaluate(ps, build, true);
  for (std::size_t c = 0; c < 3; ++c) CHECK(table.grad(1, c) == 0.0);  // row 1 never looked up
  for (std::size_t c = 0; c < 3; ++c) CHECK(table.grad(4, c) == 0.0);

  table.trainable = false;
  evaluate(ps, build, true);
  for (double v : table.grad.values()) CHECK(v == 0.0);

  G g;
  const std::vector<std::int32_t> bad = {5};
  CHECK_THROWS_AS(g.embedding(table, bad), DomainError);
}

TEST_CASE("softmax values") {
  const std::vector<double> ones = {1, 1, 1};
  for (double p : softmax<double>(ones)) CHECK(p == doctest::Approx(1.0 / 3));
  const std::vector<double> x = {0, std::log(2.0)};
  const auto p = softmax<double>(x);
  CHECK(p[0] == doctest::Approx(1.0 / 3));
  CHECK(p[1] == doctest::Approx(2.0 / 3));
  const std::vector<double> y = {0.3, -2, 5, 1};
  std::vector<double> shifted = y;
  for (auto& v : shifted) v += 123.0;
  const auto a = softmax<double>(y), b = softmax<double>(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(1.0));

  const std::vector<std::uint8_t> mask = {1, 0, 0, 1};
  const auto m = softmax<double>(y, mask);
  CHECK(m[1] == 0.0);
  CHECK(m[2] == 0.0);
  CHECK(m[0] + m[3] == doctest::Approx(1.0));
  const std::vector<std::uint8_t> none = {0, 0, 0, 0};
  CHECK_THROWS_AS(softmax<double>(y, none), DomainError);

  G g;
  Var v = g.constant(Tensor<double>::row_vector({1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(g.softmax_rows(v, none), ShapeError);
}

TEST_CASE("cross entropy values") {
  std::vector<double> probs(10, 0.0);
  probs[0] = 1.0;
  CHECK(cross_entropy<double>(probs, 0) == 0.0);
  const std::vector<double> uniform(10, 0.1);
  for (std::size_t gold = 0; gold < 10; ++gold) CHECK(cross_entropy<double>(uniform, gold) == doctest::Approx(2.302585093));
  CHECK(cross_entropy<double>(probs, 3) > 0.0);
  CHECK_THROWS_AS(cross_entropy<double>(probs, 10), DomainError);
}

TEST_CASE("dropout") {
  G g;
  std::mt19937_64 rng(8);
  Var x = g.constant(Tensor<double>(200, 250, 1.0));
  CHECK(g.dropout(x, 1.0, true, rng).id == x.id);
  CHECK(g.dropout(x, 0.8, false, rng).id == x.id);
  const auto& out = g.value(g.dropout(x, 0.8, true, rng));
  std::size_t kept = 0;
  for (double v : out.values()) {
    if (v != 0.0) {
      ++kept;
      CHECK(v == doctest::Approx(1.25));
    }
  }
  const double n = static_cast<double>(out.size());
  const double sigma = std::sqrt(n * 0.8 * 0.2);
  CHECK(std::abs(static_cast<double>(kept) - 0.8 * n) < 3 * sigma);
  CHECK_THROWS_AS(g.dropout(x, 0.0, true, rng), DomainError);
}

TEST_CASE("shape errors") {
  G g;
  Var a = g.constant(Tensor<double>(2, 3));
  Var b = g.constant(Tensor<double>(3, 2));
  CHECK_THROWS_AS(g.add(a, b), ShapeError);
  CHECK_THROWS_AS(g.matmul(a, a), ShapeError);
  CHECK_THROWS_AS(g.slice_rows(a, 1, 2), DomainError);
  CHECK_THROWS_AS(Tensor<double>(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

namespace {

struct GruFixture {
  ParameterSet<double> ps;
  GruParams<double> f, b;
  GruFixture(std::size_t in, std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    f = add_gru_params(ps, "f", in, h, rng);
    b = add_gru_params(ps, "b", in, h, rng);
    // Non-zero biases so every term is exercised.
    for (auto* p : {f.bias, b.bias}) {
      for (auto& v : p->value.values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    }
  }
};

}  // namespace

TEST_CASE("gru cell") {
  GruFixture fx(3, 4, 5);
  std::mt19937_64 rng(6);
  const Tensor<double> x = random_tensor(2, 3, rng), h0 = random_tensor(2, 4, rng);

  SUBCASE("gradient") {
    Build build = [&](G& g, std::vector<Var>&) {
      return gru_cell(g, g.constant(x), g.constant(h0), bind(g, fx.f));
    };
    CHECK(gradient_error(fx.ps, build) < 1e-6);
  }
  SUBCASE("input and state gradients") {
    ParameterSet<double> inputs;
    inputs.add("x", x);
    inputs.add("h", h0);
    Build build = [&](G& g, std::vector<Var>& p) { return gru_cell(g, p[0], p[1], bind(g, fx.f)); };
    CHECK(gradient_error(inputs, build) < 1e-6);
  }
  SUBCASE("zero parameters and zero state give zero") {
    for (std::size_t i = 0; i < fx.ps.size(); ++i) fx.ps[i].value.fill(0.0);
    G g;
    Var out = gru_cell(g, g.constant(x), g.constant(Tensor<double>(2, 4)), bind(g, fx.f));
    for (double v : g.value(out).values()) CHECK(v == 0.0);
    CHECK(g.value(out).cols() == 4);
  }
  SUBCASE("shape mismatch") {
    G g;
    CHECK_THROWS_AS(gru_cell(g, g.constant(Tensor<double>(2, 5)), g.constant(h0), bind(g, fx.f)), ShapeError);
  }
}

TEST_CASE("bidirectional gru") {
  GruFixture fx(3, 2, 9);
  std::mt19937_64 rng(10);
  std::vector<Tensor<double>> xs;
  for (int t = 0; t < 4; ++t) xs.push_back(random_tensor(2, 3, rng));
  const Tensor<double> init_f = random_tensor(2, 2, rng), init_b = random_tensor(2, 2, rng);

  auto run = [&](G& g, const std::vector<Tensor<double>>& seq, const Tensor<double>& f0, const Tensor<double>& b0,
                 std::vector<std::vector<double>> masks = {}) {
    std::vector<Var> steps;
    for (const auto& x : seq) steps.push_back(g.constant(x));
    return bigru(g, std::span<const Var>(steps), std::span<const std::vector<double>>(masks), g.constant(f0),
                 g.constant(b0), bind(g, fx.f), bind(g, fx.b));
  };

  SUBCASE("length one") {
    G g;
    auto r = run(g, {xs[0]}, init_f, init_b);
    Var f = gru_cell(g, g.constant(xs[0]), g.constant(init_f), bind(g, fx.f));
    Var b = gru_cell(g, g.constant(xs[0]), g.constant(init_b), bind(g, fx.b));
    REQUIRE(r.outputs.size() == 1);
    CHECK(g.value(r.outputs[0]) == g.value(g.concat_cols(f, b)));
  }
  SUBCASE("reversal swaps directions") {
    // Swap the parameter sets too, so the backward cell now reads left to right.
    const std::vector<Tensor<double>> rev(xs.rbegin(), xs.rend());
    G g1, g2;
    auto a = run(g1, xs, init_f, init_b);
    std::vector<Var> steps;
    for (const auto& x : rev) steps.push_back(g2.constant(x));
    auto b = bigru(g2, std::span<const Var>(steps), {}, g2.constant(init_b), g2.constant(init_f), bind(g2, fx.b),
                   bind(g2, fx.f));
    for (std::size_t t = 0; t < xs.size(); ++t) {
      const auto& oa = g1.value(a.outputs[t]);
      const auto& ob = g2.value(b.outputs[xs.size() - 1 - t]);
      for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 2; ++c) {
          CHECK(oa(r, c) == doctest::Approx(ob(r, 2 + c)).epsilon(1e-12));
          CHECK(oa(r, 2 + c) == doctest::Approx(ob(r, c)).epsilon(1e-12));
        }
      }
    }
    CHECK(g1.value(a.final_forward) == g2.value(b.final_backward));
  }
  SUBCASE("zero parameters and zero inits") {
    for (std::size_t i = 0; i < fx.ps.size(); ++i) fx.ps[i].value.fill(0.0);
    G g;
    auto r = run(g, xs, Tensor<double>(2, 2), Tensor<double>(2, 2));
    for (Var o : r.outputs) {
      for (double v : g.value(o).values()) CHECK(v == 0.0);
    }
  }
  SUBCASE("masked steps carry the state") {
    // Row 1 has length 2: its final forward state equals the state after step 1.
    G g;
    std::vector<std::vector<double>> masks = {{1, 1}, {1, 1}, {1, 0}, {1, 0}};
    auto r = run(g, xs, init_f, init_b, masks);
    auto short_run = run(g, {xs[0], xs[1]}, init_f, init_b);
    const auto& full = g.value(r.final_forward);
    const auto& cut = g.value(short_run.final_forward);
    CHECK(full(1, 0) == cut(1, 0));
    CHECK(full(1, 1) == cut(1, 1));
    // Backward direction for row 1 starts at step 1.
    const auto& bfull = g.value(r.final_backward);
    const auto& bcut = g.value(short_run.final_backward);
    CHECK(bfull(1, 0) == doctest::Approx(bcut(1, 0)).epsilon(1e-15));
  }
  SUBCASE("gradient through masks") {
    std::vector<std::vector<double>> masks = {{1, 1}, {1, 1}, {1, 0}, {1, 0}};
    Build build = [&](G& g, std::vector<Var>&) {
      auto r = run(g, xs, init_f, init_b, masks);
      std::vector<Var> parts(r.outputs);
      parts.push_back(g.concat_cols(r.final_forward, r.final_backward));
      Var acc = g.tanh(parts[0]);
      for (std::size_t i = 1; i < parts.size(); ++i) acc = g.add(acc, g.tanh(parts[i]));
      return acc;
    };
    CHECK(gradient_error(fx.ps, build) < 1e-6);
  }
  SUBCASE("empty sequence") {
    G g;
    CHECK_THROWS_AS(run(g, {}, init_f, init_b), DomainError);
  }
}

TEST_CASE("adam with element-wise clipping") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterSet<double> ps;
    ps.add("w", Tensor<double>::row_vector({0.5, -0.25}));
    auto state = make_optimizer_state(ps);
    clip_then_adam_step(ps, state);
    CHECK(ps.at("w").value == Tensor<double>::row_vector({0.5, -0.25}));
  }
  SUBCASE("first step moves by about the learning rate") {
    ParameterSet<double> ps;
    auto& w = ps.add("w", Tensor<double>(1, 1));
    w.grad[0] = 1.0;
    auto state = make_optimizer_state(ps);
    clip_then_adam_step(ps, state);
    CHECK(w.value[0] == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(state.step == 1);
    CHECK(w.grad[0] == 1.0);
  }
  SUBCASE("gradients are clipped to 10") {
    ParameterSet<double> ps;
    auto& w = ps.add("w", Tensor<double>(1, 2));
    w.grad[0] = 25.0;
    w.grad[1] = -40.0;
    auto state = make_optimizer_state(ps);
    clip_then_adam_step(ps, state);
    // m = (1 - beta1) * clip(g), v = (1 - beta2) * clip(g)^2
    CHECK(state.first_moment[0][0] == doctest::Approx(1.0));
    CHECK(state.first_moment[0][1] == doctest::Approx(-1.0));
    CHECK(state.second_moment[0][0] == doctest::Approx(0.1));
  }
  SUBCASE("frozen parameters keep values and moments") {
    ParameterSet<double> ps;
    auto& w = ps.add("w", Tensor<double>(1, 1, 2.0), false);
    w.grad[0] = 3.0;
    auto state = make_optimizer_state(ps);
    clip_then_adam_step(ps, state);
    CHECK(w.value[0] == 2.0);
    CHECK(state.first_moment[0][0] == 0.0);
  }
  SUBCASE("matches a hand-rolled recurrence over several steps") {
    ParameterSet<double> ps;
    auto& w = ps.add("w", Tensor<double>(1, 1, 0.3));
    auto state = make_optimizer_state(ps, AdamConfig{0.01, 0.9, 0.999, 1e-8, 10.0});
    double x = 0.3, m = 0, v = 0;
    for (int t = 1; t <= 5; ++t) {
      const double g = 2 * x - 12.0;  // unclipped derivative of (x - 6)^2, clipped below
      w.grad[0] = g;
      clip_then_adam_step(ps, state);
      const double gc = std::clamp(g, -10.0, 10.0);
      m = 0.9 * m + 0.1 * gc;
      v = 0.999 * v + 0.001 * gc * gc;
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(w.value[0] == doctest::Approx(x).epsilon(1e-12));
    }
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  std::mt19937_64 rng(1);
  ParameterSet<float> ps;
  ps.add("a", random_tensor(3, 4, rng).cast<float>());
  ps.add("b.c", random_tensor(1, 1, rng).cast<float>(), false);
  std::stringstream buf;
  save_checkpoint(ps, buf);
  const std::string bytes = buf.str();
  const auto back = load_checkpoint<float>(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK(back[0].value == ps[0].value);
  CHECK(back[1].value == ps[1].value);
  CHECK_FALSE(back[1].trainable);
  std::stringstream again;
  save_checkpoint(back, again);
  CHECK(again.str() == bytes);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint<float>(truncated), FormatError);
  std::stringstream wrong_magic("NOTACKPT" + bytes.substr(8));
  CHECK_THROWS_AS(load_checkpoint<float>(wrong_magic), FormatError);
  std::stringstream other_precision(bytes);
  CHECK_THROWS_AS(load_checkpoint<double>(other_precision), FormatError);
}

TEST_CASE("forward and backward are bit-identical across runs") {
  GruFixture a(3, 4, 12), b(3, 4, 12);
  std::mt19937_64 rng(3);
  const Tensor<double> x = random_tensor(2, 3, rng), h0 = random_tensor(2, 4, rng);
  auto once = [&](GruFixture& fx) {
    fx.ps.zero_grad();
    G g;
    Var out = gru_cell(g, g.constant(x), g.constant(h0), bind(g, fx.f));
    g.backward(weighted_sum(g, out, 5));
    std::vector<Tensor<double>> grads;
    for (std::size_t i = 0; i < fx.ps.size(); ++i) grads.push_back(fx.ps[i].grad);
    return std::make_pair(g.value(out), grads);
  };
  CHECK(once(a) == once(b));
}
