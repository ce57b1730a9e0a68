#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "chembfn/dataset.hpp"
#include "chembfn/metrics.hpp"
#include "test_helpers.hpp"

using namespace chembfn;

TEST_CASE("validity examples") {
    CHECK(validity({"CCO"}) == 1.0);
    CHECK(validity({"C1CC"}) == 0.0);
    CHECK(validity({"C(C"}) == 0.0);
    for (const char* ok : {"c1ccccc1", "C1CC1", "CC(=O)O", "[NH4+]", "C[C@@H](N)C(=O)O", "c1ccc2[nH]ccc2c1",
                           "C%10CC%10", "O=C=O", "[Na+].[Cl-]", "F/C=C/F", "C#N", "c1ccoc1", "CS(=O)(=O)C"}) {
        CAPTURE(std::string(ok));
        CHECK(is_valid_smiles(ok));
    }
    for (const char* bad : {"", "C)", "C((C)", "[C", "C]", "C=", "=C", "C==C", "C1CC2", "c1cccc1", "cc",
                            "C(C)(C)(C)(C)C", "N(C)(C)(C)C", "O(C)(C)C", "C!C", "[Xx]", "C11", "(C)C", "C.",
                            "[C@@@@@H]"}) {
        CAPTURE(std::string(bad));
        CHECK_FALSE(is_valid_smiles(bad));
    }
}

TEST_CASE("validity accepts every molecule of the bundled corpora") {
    for (const char* file : {"corpus_1k.smi", "toy_32.smi"}) {
        std::vector<std::string> smiles;
        for (const auto& r : read_smiles_file(testing::data_path(file))) smiles.push_back(r.smiles);
        CAPTURE(file);
        CHECK(validity(smiles) == 1.0);
    }
}

TEST_CASE("uniqueness and novelty") {
    CHECK(uniqueness({"CCO", "CCO", "CCN"}) == doctest::Approx(2.0 / 3.0));
    CHECK(novelty({"CCO", "CCN"}, {}) == 1.0);
    CHECK(novelty({"CCO", "CCN", "CCO"}, {"CCO", "CCN", "C"}) == 0.0);
    CHECK(novelty({"CCO", "CCN"}, {"CCO"}) == 0.5);
    CHECK_THROWS_AS(uniqueness({}), std::invalid_argument);
    CHECK_THROWS_AS(novelty({}, {"C"}), std::invalid_argument);

    std::vector<std::string> list = {"CCO", "C1CC", "CCN", "CCO", "c1ccccc1", "C(C"};
    const std::set<std::string> ref = {"CCN", "C"};
    const SampleSummary base = summarize_samples(list, &ref);
    std::mt19937_64 gen(1);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(list.begin(), list.end(), gen);
        const SampleSummary s = summarize_samples(list, &ref);
        CHECK(s.validity == base.validity);
        CHECK(s.uniqueness == base.uniqueness);
        CHECK(s.novelty == base.novelty);
    }
    CHECK(summarize_samples(list, nullptr).novelty < 0.0);

    std::ostringstream csv;
    write_summary_csv(csv, base);
    CHECK(csv.str().rfind("n,validity,uniqueness,novelty\n", 0) == 0);
}

TEST_CASE("entropy") {
    CHECK(entropy({0.5, 0.5}) == doctest::Approx(std::log(2.0)));
    CHECK(entropy({1.0, 0.0, 0.0}) == 0.0);
}

TEST_CASE("entropy curve: exact at t = 0, bounded, monotone within noise") {
    const ScheduleParams params = default_schedule(246);
    const EntropyCurve curve = entropy_curve(params, 11, 2000, Rng(4));
    REQUIRE(curve.points.size() == 11);
    CHECK(curve.points.front().t == 0.0);
    CHECK(curve.points.back().t == 1.0);
    CHECK(curve.points.front().entropy == std::log(246.0));
    CHECK(curve.points.front().stderr_ == 0.0);
    for (std::size_t j = 0; j < curve.points.size(); ++j) {
        const auto& p = curve.points[j];
        CHECK(p.entropy >= 0.0);
        CHECK(p.entropy <= std::log(246.0));
        if (j > 0) {
            const auto& q = curve.points[j - 1];
            CHECK(q.t < p.t);
            CHECK(p.entropy <= q.entropy + 3.0 * std::hypot(p.stderr_, q.stderr_));
        }
    }
    std::ostringstream csv;
    write_entropy_csv(csv, curve);
    CHECK(csv.str().rfind("t,entropy,stderr\n", 0) == 0);
}

TEST_CASE("entropy standard errors shrink as 1/sqrt(n)") {
    const ScheduleParams params = default_schedule(246);
    const EntropyCurve small = entropy_curve(params, 5, 2000, Rng(6));
    const EntropyCurve large = entropy_curve(params, 5, 8000, Rng(6));
    for (std::size_t j = 1; j < 5; ++j) {
        const double ratio = small.points[j].stderr_ / large.points[j].stderr_;
        CHECK(ratio == doctest::Approx(2.0).epsilon(0.15));
    }
}

TEST_CASE("entropy curve with vanishing accuracy is flat") {
    ScheduleParams p = default_schedule(246);
    p.beta_one = 1e-14;
    const EntropyCurve curve = entropy_curve(p, 6, 100, Rng(1));
    for (const auto& pt : curve.points) CHECK(pt.entropy == doctest::Approx(std::log(246.0)).epsilon(1e-9));
    CHECK(std::isfinite(curve.fit.r_squared));
    CHECK(std::isfinite(curve.fit.slope));
    CHECK(std::abs(curve.fit.slope) < 1e-9);
}

TEST_CASE("entropy curve argument checks") {
    CHECK_THROWS(entropy_curve(default_schedule(246), 2, 100, Rng(1)));
    CHECK_THROWS(entropy_curve(default_schedule(246), 5, 99, Rng(1)));
}

TEST_CASE("line fit and cumulative linearity") {
    const LinearFit f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r_squared == doctest::Approx(1.0));
    CHECK(fit_line({0, 1, 2}, {4, 4, 4}).r_squared == 1.0);

    std::vector<std::pair<double, double>> constant_increments, quadratic_increments;
    for (int j = 0; j <= 100; ++j) {
        const double t = j / 100.0;
        const double prev = (j - 1) / 100.0;
        constant_increments.emplace_back(t, j == 0 ? 0.0 : 0.7);
        quadratic_increments.emplace_back(t, j == 0 ? 0.0 : t * t - prev * prev);
    }
    CHECK(cumulative_loss_linearity(constant_increments) == doctest::Approx(1.0).epsilon(1e-12));
    // Least-squares R^2 of t^2 on a 101-point grid, computed independently.
    CHECK(cumulative_loss_linearity(quadratic_increments) == doctest::Approx(0.9363471226052923).epsilon(1e-10));

    std::vector<std::pair<double, double>> permuted;
    std::vector<double> incs = {0.1, 0.5, 0.2, 0.9, 0.3, 0.05, 0.7, 0.4};
    std::sort(incs.begin(), incs.end());
    for (std::size_t j = 0; j < incs.size(); ++j) permuted.emplace_back(j / 7.0, incs[j]);
    CHECK(cumulative_loss_linearity(permuted) < 1.0);
    CHECK_THROWS(cumulative_loss_linearity({{0.0, 1.0}, {1.0, 1.0}}));
}
