#include <cmath>

#include "doctest.h"
#include "dpf/distributions.hpp"

using namespace dpf;

TEST_CASE("rng determinism and splitting") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng parent(7);
  Rng c1 = parent.split("prior");
  Rng c2 = parent.split("dynamic");
  Rng c1_again = parent.split("prior");
  CHECK(c1.next_u64() == c1_again.next_u64());
  CHECK(c1.next_u64() != c2.next_u64());

  Rng n(9);
  double m = 0.0, s2 = 0.0;
  const int reps = 100000;
  for (int i = 0; i < reps; ++i) {
    const double z = n.normal();
    m += z;
    s2 += z * z;
  }
  m /= reps;
  s2 = s2 / reps - m * m;
  CHECK(std::abs(m) < 0.02);
  CHECK(std::abs(s2 - 1.0) < 0.02);
}

TEST_CASE("gaussian sampling is the affine map of recorded noise") {
  Tensor mean({2}, (Array(2) << 5.0, -1.0).finished());
  Array chol_data(4);
  chol_data << 2.0, 0.0, 0.5, 1.5;
  MultivariateGaussian dist(mean, Tensor({2, 2}, chol_data));

  Rng rng(11), rng_clone(11);
  Tensor sample = dist.sample({3, 4}, rng);
  Array eps = rng_clone.normals(3 * 4 * 2);
  CHECK(sample.shape == Shape{3, 4, 2});
  for (Index i = 0; i < 12; ++i) {
    const double e0 = eps[2 * i], e1 = eps[2 * i + 1];
    CHECK(sample.data[2 * i] == doctest::Approx(5.0 + 2.0 * e0));
    CHECK(sample.data[2 * i + 1] == doctest::Approx(-1.0 + 0.5 * e0 + 1.5 * e1));
  }

  SUBCASE("empirical mean matches within Monte Carlo error") {
    MultivariateGaussian d2(Tensor({2}, (Array(2) << 1.0, 2.0).finished()),
                            Tensor({2, 2}, (Array(4) << 1.0, 0.0, 0.0, 3.0).finished()));
    Rng r(99);
    const Index n = 100000;
    Tensor s = d2.sample({n}, r);
    double m0 = 0.0, m1 = 0.0;
    for (Index i = 0; i < n; ++i) {
      m0 += s.data[2 * i];
      m1 += s.data[2 * i + 1];
    }
    m0 /= n;
    m1 /= n;
    CHECK(std::abs(m0 - 1.0) < 3.0 * 1.0 / std::sqrt(double(n)));
    CHECK(std::abs(m1 - 2.0) < 3.0 * 3.0 / std::sqrt(double(n)));
  }
}

TEST_CASE("gaussian log density") {
  SUBCASE("standard normal mode, D=1") {
    MultivariateGaussian d(Tensor({1}, Array::Zero(1)), Tensor({1, 1}, Array::Ones(1)));
    Tensor x = Tensor::zeros({1, 1});
    CHECK(d.log_density(x).data[0] == doctest::Approx(-0.9189385332046727));
  }
  SUBCASE("D=2 identity at (1,1)") {
    MultivariateGaussian d(Tensor({2}, Array::Zero(2)),
                           Tensor({2, 2}, (Array(4) << 1, 0, 0, 1).finished()));
    Tensor x = Tensor::full({1, 2}, 1.0);
    CHECK(d.log_density(x).data[0] == doctest::Approx(-std::log(2 * M_PI) * 2 / 2 - 1.0));
  }
  SUBCASE("gradient w.r.t. x vanishes at the mean") {
    Tape tape;
    Tensor x = tape.leaf(Array::Constant(2, 0.5), {1, 2});
    MultivariateGaussian d(Tensor({2}, Array::Constant(2, 0.5)),
                           Tensor({2, 2}, (Array(4) << 1.3, 0, -0.2, 0.7).finished()));
    Tensor ld = d.log_density(x);
    tape.backward(reshape(ld, {}));
    CHECK((tape.grad(x).abs() < 1e-12).all());
  }
  SUBCASE("self-normalised importance weights average to one") {
    // Monte Carlo check that the density integrates to 1.
    MultivariateGaussian p(Tensor({2}, Array::Zero(2)),
                           Tensor({2, 2}, (Array(4) << 1.2, 0, 0.3, 0.8).finished()));
    MultivariateGaussian q(Tensor({2}, (Array(2) << 0.4, -0.2).finished()),
                           Tensor({2, 2}, (Array(4) << 1.0, 0, -0.1, 1.1).finished()));
    Rng r(17);
    const Index n = 100000;
    Tensor xs = p.sample({n}, r);
    Tensor lw = sub(q.log_density(xs), p.log_density(xs));
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) acc += std::exp(lw.data[i]);
    CHECK(acc / n == doctest::Approx(1.0).epsilon(0.01));
  }
  SUBCASE("singular cholesky is rejected") {
    CHECK_THROWS_AS(MultivariateGaussian(Tensor({1}, Array::Zero(1)),
                                         Tensor({1, 1}, Array::Zero(1))),
                    ContractError);
  }
}

TEST_CASE("categorical sampling") {
  SUBCASE("point mass") {
    Tensor lw({1, 3}, (Array(3) << 0.0, -1e30, -1e30).finished());
    Rng r(3);
    IndexMatrix idx = categorical_sample(lw, 50, r);
    CHECK((idx == 0).all());
  }
  SUBCASE("uniform frequencies") {
    Tensor lw = Tensor::full({1, 4}, -std::log(4.0));
    Rng r(5);
    IndexMatrix idx = categorical_sample(lw, 100000, r);
    Eigen::Array4d freq = Eigen::Array4d::Zero();
    for (Index i = 0; i < idx.cols(); ++i) freq[idx(0, i)] += 1.0;
    freq /= static_cast<double>(idx.cols());
    for (int j = 0; j < 4; ++j) CHECK(freq[j] == doctest::Approx(0.25).epsilon(0.04));
  }
  SUBCASE("skewed frequencies") {
    Tensor lw({1, 2}, (Array(2) << std::log(0.9), std::log(0.1)).finished());
    Rng r(6);
    IndexMatrix idx = categorical_sample(lw, 100000, r);
    double f0 = 0.0;
    for (Index i = 0; i < idx.cols(); ++i) f0 += (idx(0, i) == 0);
    CHECK(f0 / idx.cols() == doctest::Approx(0.9).epsilon(0.011));
  }
  SUBCASE("degenerate weights error") {
    Tensor lw = Tensor::full({1, 3}, -std::numeric_limits<double>::infinity());
    Rng r(1);
    CHECK_THROWS_AS(categorical_sample(lw, 2, r), NumericalError);
  }
}

TEST_CASE("systematic sampling") {
  SUBCASE("uniform weights give a permutation") {
    Tensor lw = Tensor::full({1, 4}, -std::log(4.0));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r(seed);
      IndexMatrix idx = systematic_sample(lw, r);
      Eigen::Array4i count = Eigen::Array4i::Zero();
      for (Index i = 0; i < 4; ++i) count[idx(0, i)] += 1;
      CHECK((count == 1).all());
    }
  }
  SUBCASE("equal halves") {
    Tensor lw = Tensor::full({1, 2}, -std::log(2.0));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r(seed);
      IndexMatrix idx = systematic_sample(lw, r);
      CHECK(idx(0, 0) == 0);
      CHECK(idx(0, 1) == 1);
    }
  }
  SUBCASE("0.75/0.25 split over K=4") {
    Tensor lw({1, 2}, (Array(2) << std::log(0.75), std::log(0.25)).finished());
    Tensor lw4({1, 4},
               (Array(4) << std::log(0.375), std::log(0.375), std::log(0.125), std::log(0.125))
                   .finished());
    (void)lw4;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng r(seed);
      Tensor padded({1, 4}, (Array(4) << std::log(0.75), std::log(0.25), -1e300, -1e300)
                                .finished());
      IndexMatrix idx = systematic_sample(padded, r);
      int zero_count = 0;
      for (Index i = 0; i < 4; ++i) zero_count += (idx(0, i) == 0);
      CHECK(zero_count == 3);
    }
  }
  SUBCASE("index count variance no worse than multinomial") {
    Rng weight_rng(77);
    double var_sys = 0.0, var_mult = 0.0;
    const int trials = 1000;
    const Index k = 8;
    for (int t = 0; t < trials; ++t) {
      Array raw = weight_rng.uniforms(k) + 0.05;
      Array lw = (raw / raw.sum()).log();
      Tensor lwt({1, k}, lw);
      Rng r1 = weight_rng.split(static_cast<std::uint64_t>(t));
      Rng r2 = r1.split("mult");
      IndexMatrix s = systematic_sample(lwt, r1);
      IndexMatrix m = categorical_sample(lwt, k, r2);
      Array cs = Array::Zero(k), cm = Array::Zero(k);
      for (Index i = 0; i < k; ++i) {
        cs[s(0, i)] += 1.0;
        cm[m(0, i)] += 1.0;
      }
      const Array expected = raw / raw.sum() * static_cast<double>(k);
      var_sys += (cs - expected).square().sum();
      var_mult += (cm - expected).square().sum();
    }
    CHECK(var_sys <= var_mult);
  }
}

TEST_CASE("log_normalise returns weights and normaliser") {
  Tensor lw({2, 2}, (Array(4) << 0.0, 0.0, 1.0, 3.0).finished());
  auto [norm, z] = log_normalise(lw);
  CHECK(z.shape == Shape{2, 1});
  CHECK(z.data[0] == doctest::Approx(std::log(2.0)));
  CHECK(z.data[1] == doctest::Approx(std::log(std::exp(1.0) + std::exp(3.0))));
  CHECK(logsumexp(norm, -1).data[0] == doctest::Approx(0.0));
  CHECK(logsumexp(norm, -1).data[1] == doctest::Approx(0.0));
}

TEST_CASE("reparametrised mean gradient is the identity") {
  Tape tape;
  Tensor mu = tape.leaf((Array(2) << 1.0, 2.0).finished(), {2});
  MultivariateGaussian d(mu, Tensor({2, 2}, (Array(4) << 1.0, 0, 0, 3.0).finished()));
  Rng r(31);
  const Index n = 10000;
  Tensor s = d.sample({n}, r);
  Tensor loss = mul(mean_all(s), Tensor::scalar(2.0));  // mean over draws of x0 + x1
  tape.backward(loss);
  const Array g = tape.grad(mu);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(g[1] == doctest::Approx(1.0).epsilon(1e-2));
}
