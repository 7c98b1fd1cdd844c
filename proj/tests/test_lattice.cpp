#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "qhjb/lattice.hpp"

using namespace qhjb;

namespace {

double prob_at(const Stencil& s, std::vector<int> off) {
    double p = 0.0;
    for (const auto& e : s.probs)
        if (e.offset == off) p += e.probability;
    return p;
}

Transition step(double x, double x_next, double delta) {
    Transition t;
    t.x = {{x}, false};
    t.next = {{x_next}, false};
    t.delta = delta;
    return t;
}

}  // namespace

TEST_CASE("encode picks the nearest point with ties going down") {
    Lattice lat(0.02);
    CHECK(lat.num_cells() == 51);
    CHECK(lat.point(lat.encode(0.013))[0] == doctest::Approx(0.02));
    CHECK(lat.encode(0.01) == 0);
    CHECK(lat.encode(1.0) == 50);
    CHECK(lat.is_boundary(lat.encode(1.0)));
    CHECK_FALSE(lat.is_boundary(25));
    CHECK_THROWS(lat.encode(1.5));
    CHECK_THROWS(Lattice(0.03));
}

TEST_CASE("encode inverts point on every cell") {
    for (int d : {1, 2}) {
        Lattice lat(0.05, d);
        for (Cell c = 0; c < lat.num_cells(); ++c) CHECK(lat.encode(lat.point(c)) == c);
    }
}

TEST_CASE("neighbour sets") {
    Lattice one(0.02);
    auto n = one.neighbors(10);
    std::sort(n.begin(), n.end());
    CHECK(n == std::vector<Cell>{9, 11});
    CHECK(one.neighbors(0) == std::vector<Cell>{1});

    Lattice two(0.1, 2);
    const Cell mid = two.cell_at({5, 5});
    CHECK(two.neighbors(mid).size() == 8);
    CHECK(two.neighbors(two.cell_at({0, 0})).size() == 3);
}

TEST_CASE("model update examples") {
    LatticeModel model(3, 2, 1);
    model.update(1, 1, step(0.5, 0.501, 0.001), 1.0);
    CHECK(model.at(1, 1).mu[0] == doctest::Approx(1.0));
    CHECK(model.at(1, 1).sigma[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(model.at(1, 0).mu[0] == 0.0);
    CHECK_THROWS(model.update(1, 1, step(0.5, 0.501, 0.001), 0.0));
}

TEST_CASE("model EMA recovers the diffusion rate") {
    LatticeModel model(1, 1, 1);
    std::mt19937_64 rng(77);
    std::normal_distribution<double> z(0.0, 1.0);
    const double delta = 1e-3, sigma2 = 0.04;
    for (int i = 0; i < 10000; ++i) model.update(0, 0, step(0.5, 0.5 + std::sqrt(sigma2 * delta) * z(rng), delta), 1e-3);
    CHECK(model.at(0, 0).sigma[0] == doctest::Approx(sigma2).epsilon(0.1));
}

TEST_CASE("stencil examples in one dimension") {
    const Stencil det = fd_stencil({1.0}, {0.0}, 0.02);
    CHECK(det.delta == doctest::Approx(0.02));
    CHECK(prob_at(det, {1}) == doctest::Approx(1.0));
    CHECK(prob_at(det, {-1}) == 0.0);

    const Stencil walk = fd_stencil({0.0}, {0.04}, 0.02);
    CHECK(walk.delta == doctest::Approx(0.01));
    CHECK(prob_at(walk, {1}) == doctest::Approx(0.5));
    CHECK(prob_at(walk, {-1}) == doctest::Approx(0.5));

    const Stencil mixed = fd_stencil({1.0}, {0.02}, 0.02);
    CHECK(mixed.delta == doctest::Approx(0.01));
    CHECK(prob_at(mixed, {1}) == doctest::Approx(0.75));
    CHECK(prob_at(mixed, {-1}) == doctest::Approx(0.25));

    CHECK_THROWS_AS(fd_stencil({0.0}, {0.0}, 0.02), DegenerateModelError);
}

TEST_CASE("stencil timestep scaling") {
    const double a = fd_stencil({0.0}, {0.3}, 0.04).delta, b = fd_stencil({0.0}, {0.3}, 0.02).delta;
    CHECK(a / b == doctest::Approx(4.0));
    const double c = fd_stencil({0.7}, {0.0}, 0.04).delta, d = fd_stencil({0.7}, {0.0}, 0.02).delta;
    CHECK(c / d == doctest::Approx(2.0));
}

TEST_CASE("stencil probabilities form a distribution for random models") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const int d = 1 + trial % 2;
        Vec mu(d);
        for (auto& m : mu) m = 3 * u(rng);
        Vec sigma(d * d, 0.0);
        if (d == 1) {
            sigma[0] = pos(rng);
        } else {
            const double off = u(rng) * 0.5;
            sigma[1] = sigma[2] = off;
            sigma[0] = std::abs(off) + pos(rng);
            sigma[3] = std::abs(off) + pos(rng);
        }
        const Stencil s = fd_stencil(mu, sigma, 0.02);
        CHECK(s.delta > 0.0);
        double total = 0.0;
        for (const auto& p : s.probs) {
            CHECK(p.probability >= 0.0);
            total += p.probability;
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
    }
}

TEST_CASE("kernel clamps stencil points onto the domain") {
    Lattice lat(0.02);
    LatticeModel model(lat.num_cells(), 2, 1);
    model.at(0, 0).mu = {-1.0};
    const TransitionKernel k = kernel(model, lat, 0, 0);
    CHECK(k.probability(0) == doctest::Approx(1.0));

    model.at(10, 1).mu = {0.5};
    model.at(10, 1).sigma = {0.01};
    const TransitionKernel m = kernel(model, lat, 10, 1);
    CHECK(m.probability(9) + m.probability(11) == doctest::Approx(1.0));
    CHECK(m.probability(11) > m.probability(9));
}

TEST_CASE("model CSV round trip") {
    LatticeModel model(4, 2, 2);
    model.at(3, 1).mu = {0.25, -1.5};
    model.at(3, 1).sigma = {0.1, 0.01, 0.01, 0.2};
    std::stringstream ss;
    model.write_csv(ss);
    const LatticeModel back = LatticeModel::read_csv(ss, 4, 2, 2);
    CHECK(back.at(3, 1).mu == model.at(3, 1).mu);
    CHECK(back.at(3, 1).sigma == model.at(3, 1).sigma);
}
