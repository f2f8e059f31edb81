#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ccpda/error.hpp"
#include "ccpda/weighting.hpp"

using namespace ccpda;

namespace {

Tensor random_prob_rows(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> data(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      data[i * k + j] = dist(rng) + 1e-6;
      row_sum += data[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) data[i * k + j] /= row_sum;
  }
  return Tensor::from({n, k}, std::move(data));
}

}  // namespace

TEST_CASE("compute_class_weights hand oracles") {
  SUBCASE("all rows one-hot on class 0") {
    Tensor probs = Tensor::from({3, 4}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
    auto gamma = compute_class_weights(probs);
    CHECK(gamma[0] == 1.0);
    for (std::size_t c = 1; c < 4; ++c) CHECK(gamma[c] == 0.0);
  }
  SUBCASE("uniform rows normalize to all ones") {
    Tensor probs = Tensor::from({2, 4}, std::vector<double>(8, 0.25));
    auto gamma = compute_class_weights(probs);
    for (std::size_t c = 0; c < 4; ++c) CHECK(gamma[c] == 1.0);
  }
  SUBCASE("mixed rows: mean then divide by max") {
    Tensor probs = Tensor::from({2, 2}, {0.6, 0.4, 0.2, 0.8});
    auto gamma = compute_class_weights(probs);
    CHECK(gamma[0] == doctest::Approx(0.4 / 0.6).epsilon(1e-9));
    CHECK(gamma[1] == 1.0);
  }
  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(compute_class_weights(Tensor::zeros({0, 4})), EmptyInputError);
  }
}

TEST_CASE("gamma max is exactly 1 and ranking matches column means") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng() % 40);
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % 8);
    Tensor probs = random_prob_rows(n, k, rng);
    auto gamma = compute_class_weights(probs);

    CHECK(*std::max_element(gamma.gamma.begin(), gamma.gamma.end()) == 1.0);
    for (double g : gamma.gamma) {
      CHECK(g >= 0.0);
      CHECK(g <= 1.0);
    }

    std::vector<double> col_means(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) col_means[j] += probs.at(i, j);
    std::vector<std::size_t> by_gamma(k), by_mean(k);
    std::iota(by_gamma.begin(), by_gamma.end(), 0);
    std::iota(by_mean.begin(), by_mean.end(), 0);
    auto stable_desc = [](const std::vector<double>& v) {
      return [&v](std::size_t a, std::size_t b) {
        return v[a] != v[b] ? v[a] > v[b] : a < b;
      };
    };
    std::sort(by_gamma.begin(), by_gamma.end(), stable_desc(gamma.gamma));
    std::sort(by_mean.begin(), by_mean.end(), stable_desc(col_means));
    CHECK(by_gamma == by_mean);
  }
}

TEST_CASE("gamma separability bound") {
  // no row puts mass > eps on class 1 while class 0 collects mean mass >= m
  std::mt19937_64 rng(32);
  const double eps = 0.02;
  const std::size_t n = 50;
  std::vector<double> data(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_real_distribution<double> dist(0.0, eps);
    const double small = dist(rng);
    data[i * 3 + 1] = small;
    data[i * 3 + 0] = 0.7;
    data[i * 3 + 2] = 0.3 - small;
  }
  auto gamma = compute_class_weights(Tensor::from({n, 3}, std::move(data)));
  const double m = 0.7;
  CHECK(gamma[1] / gamma[0] <= eps / m + 1e-12);
}

TEST_CASE("pseudo_label basics") {
  Tensor probs = Tensor::from({1, 3}, {0.1, 0.7, 0.2});
  CHECK(pseudo_label(probs) == std::vector<int>{1});

  Tensor tie = Tensor::from({1, 2}, {0.5, 0.5});
  CHECK(pseudo_label(tie) == std::vector<int>{0});
}

TEST_CASE("pseudo_label matches a scalar-loop oracle on random rows") {
  std::mt19937_64 rng(33);
  Tensor probs = random_prob_rows(100, 6, rng);
  auto labels = pseudo_label(probs);
  for (std::size_t i = 0; i < 100; ++i) {
    int best = 0;
    for (int c = 1; c < 6; ++c)
      if (probs.at(i, static_cast<std::size_t>(c)) >
          probs.at(i, static_cast<std::size_t>(best)))
        best = c;
    CHECK(labels[i] == best);
  }
}

TEST_CASE("pseudo_label is invariant under strictly increasing row transforms") {
  std::mt19937_64 rng(34);
  Tensor probs = random_prob_rows(50, 5, rng);
  std::vector<double> warped(probs.data().begin(), probs.data().end());
  for (double& v : warped) v = std::exp(3.0 * v) + 0.1 * v;  // strictly increasing
  Tensor warped_t = Tensor::from({50, 5}, std::move(warped));
  CHECK(pseudo_label(probs) == pseudo_label(warped_t));
}

TEST_CASE("centroid bank: init, absence, blending") {
  CentroidBank bank(3, 2, 0.7);
  CHECK_FALSE(bank.initialized(Domain::source, 0));

  // first update seeds with the batch mean exactly
  Tensor f1 = Tensor::from({4, 2}, {1, 2, 3, 4, 10, 10, 0, 0});
  const std::vector<int> l1 = {0, 0, 1, 1};
  bank.update(f1, l1, Domain::source);
  CHECK(bank.initialized(Domain::source, 0));
  CHECK(bank.initialized(Domain::source, 1));
  CHECK_FALSE(bank.initialized(Domain::source, 2));
  CHECK(bank.centroid(Domain::source, 0).data()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(bank.centroid(Domain::source, 0).data()[1] == doctest::Approx(3.0).epsilon(1e-12));

  // class absent from the second batch stays put; present class blends 0.7/0.3
  Tensor f2 = Tensor::from({2, 2}, {4, 5, 6, 7});
  const std::vector<int> l2 = {0, 0};
  bank.update(f2, l2, Domain::source);
  CHECK(bank.centroid(Domain::source, 1).data()[0] == doctest::Approx(5.0).epsilon(1e-12));
  // mu1 = (2,3), mu2 = (5,6) -> 0.7*mu1 + 0.3*mu2 = (2.9, 3.9)
  CHECK(bank.centroid(Domain::source, 0).data()[0] == doctest::Approx(2.9).epsilon(1e-12));
  CHECK(bank.centroid(Domain::source, 0).data()[1] == doctest::Approx(3.9).epsilon(1e-12));

  CHECK_THROWS_AS(bank.centroid(Domain::source, 2), ContractViolation);
  CHECK_THROWS_AS(bank.centroid(Domain::target, 0), ContractViolation);
}

TEST_CASE("centroid bank rejects out-of-range labels") {
  CentroidBank bank(3, 2, 0.7);
  Tensor f = Tensor::zeros({1, 2});
  const std::vector<int> bad = {3};
  CHECK_THROWS_AS(bank.update(f, bad, Domain::source), ContractViolation);
}

TEST_CASE("centroid converges geometrically to a constant batch mean") {
  CentroidBank bank(1, 1, 0.7);
  Tensor seed = Tensor::from({1, 1}, {0.0});
  const std::vector<int> zero = {0};
  bank.update(seed, zero, Domain::target);

  const double mu = 5.0;
  Tensor batch = Tensor::from({1, 1}, {mu});
  double prev_gap = std::abs(bank.centroid(Domain::target, 0).data()[0] - mu);
  for (int step = 0; step < 25; ++step) {
    bank.update(batch, zero, Domain::target);
    const double gap = std::abs(bank.centroid(Domain::target, 0).data()[0] - mu);
    CHECK(gap == doctest::Approx(0.7 * prev_gap).epsilon(1e-9));
    prev_gap = gap;
  }
  CHECK(prev_gap < 1e-3);
}

TEST_CASE("centroid bank validates construction") {
  CHECK_THROWS_AS(CentroidBank(0, 2, 0.7), ConfigError);
  CHECK_THROWS_AS(CentroidBank(3, 2, 1.5), ConfigError);
}
