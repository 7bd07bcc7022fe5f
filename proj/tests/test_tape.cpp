#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <vector>

#include "cgfenet/tape.hpp"

using namespace cgfenet;
using Tape = ad::Tape<double>;
using Var = Tape::Var;

namespace {

Matd random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Matd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = normal(rng) * scale;
  return m;
}

/// Central finite differences on every element of every input against the
/// tape's analytic gradients. `build` must return a scalar variable.
void gradcheck(std::vector<Matd> inputs,
               const std::function<Var(Tape&, std::vector<Var>&)>& build,
               double tol = 1e-6) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.leaf(m));
  Var out = build(tape, vars);
  REQUIRE(tape.val(out).size() == 1);
  tape.backward(out);
  std::vector<Matd> analytic;
  for (const Var v : vars) analytic.push_back(tape.grad_of(v));

  auto eval = [&](const std::vector<Matd>& xs) {
    Tape t(/*grad_enabled=*/false);
    std::vector<Var> vs;
    for (const auto& m : xs) vs.push_back(t.leaf(m));
    return t.val(build(t, vs))(0, 0);
  };

  const double h = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index j = 0; j < inputs[i].size(); ++j) {
      auto hi = inputs, lo = inputs;
      hi[i].data()[j] += h;
      lo[i].data()[j] -= h;
      const double fd = (eval(hi) - eval(lo)) / (2.0 * h);
      const double an = analytic[i].data()[j];
      CHECK(std::abs(fd - an) <= tol * (1.0 + std::abs(fd)));
    }
  }
}

}  // namespace

TEST_CASE("gradients of arithmetic primitives") {
  Rng rng(1);
  const Matd a = random_mat(rng, 3, 4);
  const Matd b = random_mat(rng, 4, 2);
  const Matd c = random_mat(rng, 3, 4);
  const Matd r = random_mat(rng, 1, 4);

  gradcheck({a, b}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.matmul(v[0], v[1]));
  });
  gradcheck({a, c}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
  });
  gradcheck({a, r}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.add_rowvec(v[0], v[1]));
  });
  gradcheck({a, r}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.mul_rowvec(v[0], v[1]));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.affine(v[0], 2.5, -0.75));
  });
}

TEST_CASE("gradients of nonlinearities") {
  Rng rng(2);
  // keep magnitudes away from the ReLU kink
  Matd a = random_mat(rng, 3, 5);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::abs(a.data()[i]) < 0.05) a.data()[i] += 0.1;

  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.relu(v[0]));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.leaky_relu(v[0], 0.2));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.sigmoid(v[0]));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.tanh_(v[0]));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(v[0]));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.rsqrt_eps(t.square(v[0]), 1e-3));
  });
}

TEST_CASE("gradients of reductions and shape ops") {
  Rng rng(3);
  const Matd a = random_mat(rng, 4, 3);
  const Matd b = random_mat(rng, 2, 3);
  const Matd r = random_mat(rng, 1, 3);

  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.mean_rows(v[0])));
  });
  gradcheck({r}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.broadcast_row(v[0], 5)));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.row(v[0], 2)));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.rows_gather(v[0], {3, 0, 0, 2})));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.rows_repeat_each(v[0], 3)));
  });
  gradcheck({a}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.rows_tile(v[0], 3)));
  });
  gradcheck({a, b}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.vstack({v[0], v[1], v[0]})));
  });
  gradcheck({a, b}, [](Tape& t, std::vector<Var>& v) {
    Var top = t.rows_gather(v[0], {0, 1});
    return t.mean_all(t.square(t.hcat(top, v[1])));
  });
}

TEST_CASE("gradients of attention helpers") {
  Rng rng(4);
  const Matd a = random_mat(rng, 5, 8);
  const Matd b = random_mat(rng, 5, 8);
  const Matd w = random_mat(rng, 5, 2);

  gradcheck({a, b}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.head_dot(v[0], v[1], 2)));
  });
  gradcheck({a, w}, [](Tape& t, std::vector<Var>& v) {
    return t.mean_all(t.square(t.head_scale(v[0], t.sigmoid(v[1]), 2)));
  });
}

TEST_CASE("gat attention: weights normalised and gradients correct") {
  // 3-node path graph: 0-1, 1-2, plus self loops
  const std::vector<std::array<int, 2>> edges{{0, 1}, {1, 0}, {1, 2}, {2, 1}};
  const auto g = ad::EdgeIndex::build(edges, 3, true);
  REQUIRE(g.num_edges() == 7);

  Rng rng(5);
  const int heads = 2, H = 8, dh = 4;
  const Matd hs = random_mat(rng, 3, H);
  const Matd ht = random_mat(rng, 3, H);
  const Matd hv = random_mat(rng, 3, H);
  const Matd att = random_mat(rng, heads, dh);

  Matd alpha;
  {
    Tape t(false);
    std::vector<Var> v{t.leaf(hs), t.leaf(ht), t.leaf(hv), t.leaf(att)};
    t.gat_attention(v[0], v[1], v[2], v[3], g, heads, 0.2, &alpha);
  }
  // per-destination softmax rows sum to 1
  for (int i = 0; i < 3; ++i)
    for (int m = 0; m < heads; ++m) {
      double s = 0.0;
      for (int e = g.offsets[static_cast<std::size_t>(i)];
           e < g.offsets[static_cast<std::size_t>(i) + 1]; ++e)
        s += alpha(e, m);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }

  // independent recomputation of the attention weights
  for (int i = 0; i < 3; ++i)
    for (int m = 0; m < heads; ++m) {
      std::vector<double> scores;
      for (int e = g.offsets[static_cast<std::size_t>(i)];
           e < g.offsets[static_cast<std::size_t>(i) + 1]; ++e) {
        double s = 0.0;
        for (int d = 0; d < dh; ++d) {
          const double pre = hs(g.dst[static_cast<std::size_t>(e)], m * dh + d) +
                             ht(g.src[static_cast<std::size_t>(e)], m * dh + d);
          s += att(m, d) * (pre > 0 ? pre : 0.2 * pre);
        }
        scores.push_back(s);
      }
      double z = 0.0;
      for (const double s : scores) z += std::exp(s);
      int k = 0;
      for (int e = g.offsets[static_cast<std::size_t>(i)];
           e < g.offsets[static_cast<std::size_t>(i) + 1]; ++e, ++k)
        CHECK(alpha(e, m) ==
              Catch::Approx(std::exp(scores[static_cast<std::size_t>(k)]) / z)
                  .epsilon(1e-10));
    }

  gradcheck({hs, ht, hv, att}, [&g, heads](Tape& t, std::vector<Var>& v) {
    return t.mean_all(
        t.square(t.gat_attention(v[0], v[1], v[2], v[3], g, heads, 0.2)));
  }, 5e-6);
}

TEST_CASE("gat attention on an isolated self-loop node") {
  const auto g = ad::EdgeIndex::build({}, 1, true);
  Tape t(false);
  Rng rng(6);
  const Matd h = random_mat(rng, 1, 4);
  const Matd att = random_mat(rng, 2, 2);
  Matd alpha;
  Var out = t.gat_attention(t.leaf(h), t.leaf(h), t.leaf(h), t.leaf(att), g, 2,
                            0.2, &alpha);
  CHECK(alpha(0, 0) == 1.0);  // softmax over one element
  CHECK(alpha(0, 1) == 1.0);
  CHECK((t.val(out) - h).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("edge index rejects isolated nodes without self loops") {
  CHECK_THROWS_WITH(
      ad::EdgeIndex::build({{0, 1}, {1, 0}}, 3, false),
      Catch::Matchers::ContainsSubstring("no incident edges"));
}

TEST_CASE("dropout scales kept entries and zeroes the rest") {
  Tape t;
  Rng rng(7);
  const Matd ones = Matd::Ones(50, 40);
  Var v = t.leaf(ones);
  Var d = t.dropout(v, 0.25, rng, true);
  const Matd& out = t.val(d);
  int kept = 0;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double x = out.data()[i];
    CHECK((x == 0.0 || std::abs(x - 1.0 / 0.75) < 1e-12));
    kept += x != 0.0;
  }
  CHECK(kept > 1200);
  CHECK(kept < 1700);

  // eval mode is the identity
  Rng rng2(7);
  Var e = t.dropout(v, 0.25, rng2, false);
  CHECK(e.id == v.id);
}

TEST_CASE("detach blocks gradient flow") {
  Tape t;
  Var a = t.leaf(Matd::Ones(2, 2));
  Var b = t.mse(t.scale(a, 3.0), t.detach(t.scale(a, 2.0)));
  t.backward(b);
  // d/da mean((3a - 2a_const)^2) at a=1: 2*(3-2)*3/1 = 6 per element / 4 -> 1.5
  CHECK(t.grad_of(a)(0, 0) == Catch::Approx(1.5));
}

TEST_CASE("backward accumulates into bound parameters") {
  ad::Parameter<double> p;
  p.name = "w";
  p.value = Matd::Ones(2, 2);
  p.zero_grad();
  Tape t;
  Var w = t.param(p);
  t.backward(t.mean_all(t.square(w)));
  CHECK(p.grad(0, 0) == Catch::Approx(0.5));  // 2w/4
  // second pass accumulates
  Tape t2;
  Var w2 = t2.param(p);
  t2.backward(t2.mean_all(t2.square(w2)));
  CHECK(p.grad(0, 0) == Catch::Approx(1.0));
}
