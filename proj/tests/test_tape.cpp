#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "dpf/tape.hpp"

using namespace dpf;

namespace {

using LossFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

double eval_loss(const LossFn& f, const std::vector<std::pair<Shape, Array>>& inputs) {
  Tape tape;
  std::vector<Tensor> xs;
  for (const auto& [shape, data] : inputs) xs.push_back(tape.leaf(data, shape));
  return f(tape, xs).value();
}

// Central finite differences against the tape gradient, relative tol 1e-4.
void check_grads(const LossFn& f, std::vector<std::pair<Shape, Array>> inputs,
                 double h = 1e-5, double rtol = 1e-4) {
  Tape tape;
  std::vector<Tensor> xs;
  for (const auto& [shape, data] : inputs) xs.push_back(tape.leaf(data, shape));
  Tensor loss = f(tape, xs);
  tape.backward(loss);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Array g = tape.grad(xs[i]);
    for (Index j = 0; j < inputs[i].second.size(); ++j) {
      auto perturbed = inputs;
      perturbed[i].second[j] += h;
      const double up = eval_loss(f, perturbed);
      perturbed[i].second[j] -= 2 * h;
      const double down = eval_loss(f, perturbed);
      const double fd = (up - down) / (2 * h);
      CAPTURE(i);
      CAPTURE(j);
      CHECK(std::abs(g[j] - fd) <= rtol * std::max(1.0, std::abs(fd)));
    }
  }
}

Array randu(std::mt19937& rng, Index n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Array a(n);
  for (Index i = 0; i < n; ++i) a[i] = dist(rng);
  return a;
}

}  // namespace

TEST_CASE("square value and gradient") {
  Tape tape;
  Tensor x = tape.leaf(Array::Constant(1, 3.0), {});
  Tensor y = x * x;
  CHECK(y.value() == doctest::Approx(9.0));
  tape.backward(y);
  CHECK(tape.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("sum of ones") {
  Tape tape;
  Tensor x = tape.leaf(Array::Ones(4), {2, 2});
  Tensor y = sum_all(x);
  CHECK(y.value() == doctest::Approx(4.0));
  tape.backward(y);
  CHECK((tape.grad(x) == 1.0).all());
}

TEST_CASE("logsumexp of zeros") {
  Tape tape;
  Tensor x = tape.leaf(Array::Zero(2), {2});
  Tensor y = reshape(logsumexp(x, 0), {});
  CHECK(y.value() == doctest::Approx(std::log(2.0)));
  tape.backward(y);
  CHECK(tape.grad(x)[0] == doctest::Approx(0.5));
  CHECK(tape.grad(x)[1] == doctest::Approx(0.5));

  check_grads(
      [](Tape&, std::vector<Tensor>& xs) { return reshape(logsumexp(xs[0], 0), Shape{}); },
      {{Shape{2}, Array::Zero(2)}}, 1e-6, 1e-6);
}

TEST_CASE("stop_gradient semantics") {
  SUBCASE("product with one detached factor") {
    Tape tape;
    Tensor x = tape.leaf(Array::Constant(1, 3.0), {});
    Tensor y = stop_gradient(x) * x;
    CHECK(y.value() == doctest::Approx(9.0));
    tape.backward(y);
    CHECK(tape.grad(x)[0] == doctest::Approx(3.0));
  }
  SUBCASE("fully detached loss") {
    Tape tape;
    Tensor x = tape.leaf(Array::Constant(1, 5.0), {});
    Tensor y = stop_gradient(x);
    tape.backward(y);
    CHECK(tape.grad(x)[0] == 0.0);
  }
  SUBCASE("detached denominator") {
    Tape tape;
    Tensor w = tape.leaf(Array::Constant(1, 0.25), {});
    Tensor y = w / stop_gradient(w);
    CHECK(y.value() == doctest::Approx(1.0));
    tape.backward(y);
    CHECK(tape.grad(w)[0] == doctest::Approx(4.0));
  }
  SUBCASE("idempotence") {
    Tape tape;
    Tensor x = tape.leaf(Array::Constant(1, 2.0), {});
    Tensor once = stop_gradient(x);
    Tensor twice = stop_gradient(stop_gradient(x));
    CHECK(once.data[0] == twice.data[0]);
    Tensor y = twice * x;
    tape.backward(y);
    CHECK(tape.grad(x)[0] == doctest::Approx(2.0));
  }
  SUBCASE("forward value bit-identical") {
    Tape tape;
    Tensor x = tape.leaf(Array::Constant(3, 0.123456789), {3});
    Tensor y = stop_gradient(x);
    CHECK((y.data == x.data).all());
  }
}

TEST_CASE("backward basics") {
  SUBCASE("linear sum") {
    Tape tape;
    Tensor a = tape.leaf(Array::Constant(1, 1.0), {});
    Tensor b = tape.leaf(Array::Constant(1, 2.0), {});
    Tensor loss = a + b;
    tape.backward(loss);
    CHECK(tape.grad(a)[0] == doctest::Approx(1.0));
    CHECK(tape.grad(b)[0] == doctest::Approx(1.0));
  }
  SUBCASE("log exp identity") {
    Tape tape;
    Tensor a = tape.leaf(Array::Constant(1, -1.7), {});
    Tensor loss = log(exp(a));
    tape.backward(loss);
    CHECK(tape.grad(a)[0] == doctest::Approx(1.0));
  }
  SUBCASE("gaussian log density gradient w.r.t. mean") {
    Tape tape;
    Tensor mu = tape.leaf(Array::Zero(1), {});
    Tensor x = Tensor::scalar(1.0);
    Tensor resid = x - mu;
    Tensor loss = -0.5 * resid * resid - 0.5 * std::log(2 * M_PI);
    tape.backward(loss);
    CHECK(tape.grad(mu)[0] == doctest::Approx(1.0));
  }
  SUBCASE("untouched leaf maps to zeros") {
    Tape tape;
    Tensor a = tape.leaf(Array::Constant(1, 1.0), {});
    Tensor b = tape.leaf(Array::Constant(4, 2.0), {2, 2});
    Tensor loss = a * a;
    tape.backward(loss);
    const Array gb = tape.grad(b);
    CHECK(gb.size() == 4);
    CHECK((gb == 0.0).all());
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape tape;
    Tensor a = tape.leaf(Array::Ones(3), {3});
    CHECK_THROWS_AS(tape.backward(a), ContractError);
  }
}

TEST_CASE("gradient accumulation on a diamond graph") {
  auto f = [](Tape&, std::vector<Tensor>& xs) {
    Tensor left = exp(xs[0]);
    Tensor right = xs[0] * xs[0];
    return sum_all(left * right + left);
  };
  std::mt19937 rng(7);
  check_grads(f, {{Shape{3}, randu(rng, 3, 0.2, 1.2)}});
}

TEST_CASE("finite differences across op kinds") {
  std::mt19937 rng(42);
  const Array probe = randu(rng, 6, -1.0, 1.0);

  SUBCASE("add/sub/mul/div with broadcast") {
    auto f = [&](Tape&, std::vector<Tensor>& xs) {
      Tensor c = ((xs[0] + xs[1]) * xs[0] - xs[1]) / (xs[0] * xs[0] + 2.0);
      return sum_all(c * Tensor({2, 3}, probe));
    };
    check_grads(f, {{Shape{2, 3}, randu(rng, 6, 0.5, 2.0)}, {Shape{3}, randu(rng, 3, 0.5, 2.0)}});
  }
  SUBCASE("exp log pow sqrt neg") {
    auto f = [&](Tape&, std::vector<Tensor>& xs) {
      Tensor c = exp(xs[0]) + log(xs[0]) + pow(xs[0], 1.7) - sqrt(xs[0]) + neg(xs[0]);
      return sum_all(c * Tensor({2, 3}, probe));
    };
    check_grads(f, {{Shape{2, 3}, randu(rng, 6, 0.5, 1.5)}});
  }
  SUBCASE("reductions") {
    auto f = [&](Tape&, std::vector<Tensor>& xs) {
      Tensor s = sum(xs[0], 1) + mean(xs[0], 1) + logsumexp(xs[0], 1);
      return sum_all(s * Tensor({2, 1, 2}, probe.head(4)));
    };
    check_grads(f, {{Shape{2, 3, 2}, randu(rng, 12, -1.0, 1.0)}});
  }
  SUBCASE("matmul") {
    const Array mm_probe = randu(rng, 8, -1, 1);
    auto f = [&](Tape&, std::vector<Tensor>& xs) {
      return sum_all(matmul(xs[0], xs[1]) * Tensor({2, 2, 2}, mm_probe));
    };
    check_grads(f, {{Shape{2, 2, 3}, randu(rng, 12, -1.0, 1.0)},
                    {Shape{3, 2}, randu(rng, 6, -1.0, 1.0)}});
  }
  SUBCASE("transpose and diag") {
    auto f = [&](Tape&, std::vector<Tensor>& xs) {
      return sum_all(diag_part(transpose2d(xs[0]) ) * Tensor({3}, probe.head(3)))
             + sum_all(transpose2d(xs[0]));
    };
    check_grads(f, {{Shape{3, 3}, randu(rng, 9, -1.0, 1.0)}});
  }
  SUBCASE("trisolve_lower") {
    Array s = randu(rng, 9, 0.3, 1.0);
    s[1] = s[2] = s[5] = 0.0;  // lower triangular
    s[0] = 1.4; s[4] = 0.9; s[8] = 1.1;
    auto f = [&](Tape&, std::vector<Tensor>& xs) {
      return sum_all(trisolve_lower(xs[0], xs[1]) * Tensor({2, 3}, probe));
    };
    check_grads(f, {{Shape{3, 3}, s}, {Shape{2, 3}, randu(rng, 6, -1.0, 1.0)}});
  }
  SUBCASE("gather concat broadcast reshape") {
    IndexMatrix idx(2, 3);
    idx << 1, 1, 0, 2, 0, 2;
    const Array cat_probe = randu(rng, 12, -1, 1);
    auto f = [&](Tape&, std::vector<Tensor>& xs) {
      Tensor g = gather_ancestors(xs[0], idx);
      Tensor c = concat({g, broadcast_to(reshape(xs[1], {2, 1}), {2, 3})}, 1);
      return sum_all(c * Tensor({2, 6}, cat_probe));
    };
    check_grads(f, {{Shape{2, 3}, randu(rng, 6, -1.0, 1.0)}, {Shape{2}, randu(rng, 2, -1, 1)}});
  }
  SUBCASE("logsumexp handles an all-minus-infinity row") {
    const double ninf = -std::numeric_limits<double>::infinity();
    Array a(4);
    a << 0.0, 1.0, ninf, ninf;
    Tape tape;
    Tensor x = tape.leaf(a, {2, 2});
    Tensor lse = logsumexp(x, 1);
    CHECK(lse.data[0] == doctest::Approx(std::log(std::exp(0.0) + std::exp(1.0))));
    CHECK(lse.data[1] == ninf);
  }
}

TEST_CASE("gather indices carry no gradient") {
  // The state path is live; the index path must contribute exactly zero.
  Tape tape;
  Tensor w = tape.leaf(Array::Constant(1, 0.3), {});
  Tensor x = Tensor({1, 3}, (Array(3) << 1.0, 2.0, 3.0).finished());
  IndexMatrix idx(1, 3);
  idx << 2, 0, 1;
  Tensor picked = gather_ancestors(x, idx);  // constant input: result constant
  CHECK_FALSE(picked.on_tape());
  Tensor loss = sum_all(picked) * w;
  tape.backward(loss);
  CHECK(tape.grad(w)[0] == doctest::Approx(6.0));
}

TEST_CASE("clip_gradient clamps only the backward pass") {
  Tape tape;
  Tensor x = tape.leaf(Array::Constant(1, 2.0), {});
  Tensor y = clip_gradient(x * 10.0, 1.0);
  CHECK(y.value() == doctest::Approx(20.0));
  tape.backward(y * 3.0);
  // Incoming gradient 3 clamps to 1 before reaching the scale-10 node.
  CHECK(tape.grad(x)[0] == doctest::Approx(10.0));
}

TEST_CASE("shape errors name both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("(2,3)"), ContractError);
  CHECK_THROWS_WITH_AS(matmul(a, Tensor::zeros({2, 2})), doctest::Contains("(2,3)"),
                       ContractError);
}

TEST_CASE("inference path records nothing") {
  Tape tape;
  const std::size_t before = tape.size();
  Tensor a = Tensor::full({4, 4}, 1.5);
  Tensor b = exp(a) * a - logsumexp(a, 1);
  CHECK_FALSE(b.on_tape());
  CHECK(tape.size() == before);
}
