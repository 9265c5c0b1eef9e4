#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rtfn/eval.hpp"

using namespace rtfn;

namespace {

const std::string kTables = std::string(RTFN_DATA_DIR) + "/tables";

// O(s^2) pair-counting oracle for the Rand Index.
double rand_index_bruteforce(const std::vector<int>& pred, const std::vector<int>& truth) {
    const std::size_t s = pred.size();
    std::int64_t agree = 0, total = 0;
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j) {
            ++total;
            const bool same_pred = pred[i] == pred[j];
            const bool same_truth = truth[i] == truth[j];
            if (same_pred == same_truth) ++agree;
        }
    return static_cast<double>(agree) / static_cast<double>(total);
}

Tensor points_1d(std::vector<double> xs) {
    const int n = static_cast<int>(xs.size());
    return Tensor({n, 1}, std::move(xs));
}

}  // namespace

TEST_CASE("kmeans with k=1 returns the mean") {
    const Tensor pts = points_1d({1, 2, 3, 10});
    const ClusterAssignment a = kmeans_fit(pts, 1, 4, 99);
    CHECK(a.centroids.values[0] == doctest::Approx(4.0));
    for (int l : a.labels) CHECK(l == 0);
}

TEST_CASE("kmeans recovers the optimal 2-partition of {0,1,10,11}") {
    const Tensor pts = points_1d({0, 1, 10, 11});
    const ClusterAssignment a = kmeans_fit(pts, 2, 10, 7);

    // exhaustive oracle over all 2^4 assignments
    double best_inertia = 1e300;
    for (int mask = 0; mask < 16; ++mask) {
        double sum[2] = {0, 0};
        int cnt[2] = {0, 0};
        for (int i = 0; i < 4; ++i) {
            const int c = (mask >> i) & 1;
            sum[c] += pts.values[static_cast<std::size_t>(i)];
            ++cnt[c];
        }
        if (!cnt[0] || !cnt[1]) continue;
        double inertia = 0;
        for (int i = 0; i < 4; ++i) {
            const int c = (mask >> i) & 1;
            const double d = pts.values[static_cast<std::size_t>(i)] - sum[c] / cnt[c];
            inertia += d * d;
        }
        best_inertia = std::min(best_inertia, inertia);
    }
    CHECK(best_inertia == doctest::Approx(1.0));  // {0,1} and {10,11}
    CHECK(a.inertia == doctest::Approx(best_inertia));
    CHECK(a.labels[0] == a.labels[1]);
    CHECK(a.labels[2] == a.labels[3]);
    CHECK(a.labels[0] != a.labels[2]);
    const double c0 = a.centroids.values[static_cast<std::size_t>(a.labels[0])];
    const double c1 = a.centroids.values[static_cast<std::size_t>(a.labels[2])];
    CHECK(std::min(c0, c1) == doctest::Approx(0.5));
    CHECK(std::max(c0, c1) == doctest::Approx(10.5));
}

TEST_CASE("kmeans with k equal to the sample count has zero inertia") {
    const Tensor pts = points_1d({3, 1, 4, 1.5, 9});
    const ClusterAssignment a = kmeans_fit(pts, 5, 3, 21);
    CHECK(a.inertia == doctest::Approx(0.0));
}

TEST_CASE("kmeans rejects bad cluster counts") {
    const Tensor pts = points_1d({1, 2});
    CHECK_THROWS_AS(kmeans_fit(pts, 3, 1, 0), ConfigError);
    CHECK_THROWS_AS(kmeans_fit(pts, 0, 1, 0), ConfigError);
    CHECK_THROWS_AS(kmeans_fit(pts, 2, 0, 0), ConfigError);
}

TEST_CASE("per-run inertia trace is non-increasing") {
    Rng rng(5);
    for (int inst = 0; inst < 10; ++inst) {
        Tensor pts({30, 3});
        for (auto& v : pts.values) v = uniform_range(rng, -5, 5);
        const KmeansRun run = kmeans_single(pts, 4, rng());
        REQUIRE(!run.inertia_trace.empty());
        for (std::size_t i = 1; i < run.inertia_trace.size(); ++i)
            CHECK(run.inertia_trace[i] <= run.inertia_trace[i - 1] + 1e-9);
    }
}

TEST_CASE("rand index: perfect agreement under any relabeling") {
    const std::vector<int> truth{0, 0, 1, 1, 2, 2};
    const std::vector<int> relabeled{5, 5, 3, 3, 9, 9};
    CHECK(rand_index(truth, truth) == doctest::Approx(1.0));
    CHECK(rand_index(relabeled, truth) == doctest::Approx(1.0));
}

TEST_CASE("rand index hand example: crossing pairs give 2/6") {
    const std::vector<int> pred{0, 0, 1, 1};
    const std::vector<int> truth{0, 1, 0, 1};
    CHECK(rand_index(pred, truth) == doctest::Approx(2.0 / 6.0));
    CHECK(rand_index_bruteforce(pred, truth) == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("contingency formula equals brute-force pair counting exactly") {
    Rng rng(13);
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t s = 2 + uniform_index(rng, 49);
        const int kp = 1 + static_cast<int>(uniform_index(rng, 6));
        const int kt = 1 + static_cast<int>(uniform_index(rng, 6));
        std::vector<int> pred(s), truth(s);
        for (auto& v : pred) v = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(kp)));
        for (auto& v : truth) v = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(kt)));
        CHECK(rand_index(pred, truth) == rand_index_bruteforce(pred, truth));  // bit-exact
    }
}

TEST_CASE("rand index is symmetric under cluster relabeling on either side") {
    Rng rng(17);
    std::vector<int> pred(20), truth(20);
    for (auto& v : pred) v = static_cast<int>(uniform_index(rng, 4));
    for (auto& v : truth) v = static_cast<int>(uniform_index(rng, 3));
    auto relabel = [](std::vector<int> v) {
        for (auto& x : v) x = 7 - x;  // injective remap
        return v;
    };
    const double base = rand_index(pred, truth);
    CHECK(rand_index(relabel(pred), truth) == doctest::Approx(base));
    CHECK(rand_index(pred, relabel(truth)) == doctest::Approx(base));
    CHECK(rand_index(truth, pred) == doctest::Approx(base));
}

TEST_CASE("rand index input validation") {
    CHECK_THROWS_AS(rand_index({0, 1}, {0}), DataError);
    CHECK_THROWS_AS(rand_index({0}, {0}), DataError);
}

TEST_CASE("top-1 accuracy") {
    CHECK(top1_accuracy({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(top1_accuracy({1, 0}, {1, 1}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(top1_accuracy({1}, {1, 2}), DataError);
    CHECK_THROWS_AS(top1_accuracy({}, {}), DataError);

    // jointly permuting (pred, truth) leaves the value unchanged
    const std::vector<int> pred{0, 1, 1, 0, 2};
    const std::vector<int> truth{0, 1, 0, 0, 1};
    std::vector<int> pred_p{2, 0, 1, 0, 1};
    std::vector<int> truth_p{1, 0, 1, 0, 0};
    CHECK(top1_accuracy(pred, truth) == doctest::Approx(top1_accuracy(pred_p, truth_p)));
}

TEST_CASE("rank_table on synthetic tables") {
    const auto dir = std::filesystem::temp_directory_path();
    const std::string path = (dir / "rtfn_synth_table.csv").string();
    {
        std::ofstream os(path);
        os << "dataset,A,B,C\n";
        os << "d1,0.5,0.5,0.5\n";    // all tie
        os << "d2,0.9,0.8,0.7\n";    // A wins
        os << "d3,0.1,0.9,0.9\n";    // A loses, B/C tie
        os << "d4,---,0.4,0.3\n";    // A missing
    }
    const ResultsTable table = ResultsTable::from_csv(path);

    const RankSummary a = rank_table(table, "A");
    CHECK(a.datasets == 3);
    CHECK(a.win == 1);
    CHECK(a.tie == 1);
    CHECK(a.lose == 1);
    CHECK(a.best == 2);
    CHECK(a.win + a.tie + a.lose == a.datasets);
    CHECK(a.mean_value == doctest::Approx
((0.5 + 0.9 + 0.1) / 3));
    // ranks: d1 -> (1+2+3)/3 = 2, d2 -> 1, d3 -> 3
    CHECK(a.avg_rank == doctest::Approx(2.0));

    const RankSummary b = rank_table(table, "B");
    CHECK(b.datasets == 4);
    CHECK(b.tie == 2);  // d1 three-way, d3 with C
    CHECK(b.win == 1);  // d4 after A drops out

    CHECK_THROWS_AS(rank_table(table, "Nope"), DataError);
}

TEST_CASE("equal-value columns tie for every algorithm and all get best") {
    const auto dir = std::filesystem::temp_directory_path();
    const std::string path = (dir / "rtfn_equal_table.csv").string();
    {
        std::ofstream os(path);
        os << "dataset,A,B,C\n";
        os << "d1,0.7,0.7,0.7\n";
        os << "d2,0.7,0.70000000001,0.7\n";  // inside the 1e-9 tolerance
    }
    const ResultsTable table = ResultsTable::from_csv(path);
    for (const std::string alg : {"A", "B", "C"}) {
        const RankSummary s = rank_table(table, alg);
        CHECK(s.tie == 2);
        CHECK(s.best == 2);
        CHECK(s.win == 0);
    }
}

TEST_CASE("results tables reject out-of-range values") {
    const auto dir = std::filesystem::temp_directory_path();
    const std::string path = (dir / "rtfn_bad_table.csv").string();
    {
        std::ofstream os(path);
        os << "dataset,A\nd1,1.2\n";
    }
    CHECK_THROWS_AS(ResultsTable::from_csv(path), DataError);
}

TEST_CASE("bundled appendix data reproduces the published Table 1 ranks") {
    const ResultsTable table = ResultsTable::from_csv(kTables + "/table1_appendix.csv");
    CHECK(table.datasets().size() == 85);
    CHECK(table.algorithms().size() == 7);
    const RankSummary ours = rank_table(table, "Ours");
    CHECK(ours.win == 11);
    CHECK(ours.tie == 29);
    CHECK(ours.lose == 45);
    CHECK(ours.best == 40);
    CHECK(ours.datasets == 85);
}

TEST_CASE("bundled Table 3 reproduces the published mean accuracy and best count") {
    const ResultsTable table = ResultsTable::from_csv(kTables + "/table3.csv");
    CHECK(table.datasets().size() == 12);
    const RankSummary ours = rank_table(table, "Ours");
    CHECK(std::abs(ours.mean_value - 0.856049) <= 1e-6);
    CHECK(ours.best == 8);
    // documented average-rank substitute, frozen from an independent pass
    CHECK(ours.avg_rank == doctest::Approx(2.2916666667).epsilon(1e-9));

    // the ablation column's printed mean (0.750756) disagrees with its own
    // per-dataset values; the recomputed mean from the cells is asserted
    const RankSummary ablated = rank_table(table, "Ours w/o a-LSTM");
    CHECK(ablated.mean_value == doctest::Approx(0.7512061).epsilon(1e-6));
    CHECK(ablated.best == 0);
}

TEST_CASE("bundled Table 4 reproduces the published average RI and best count") {
    const ResultsTable table = ResultsTable::from_csv(kTables + "/table4.csv");
    CHECK(table.datasets().size() == 11);
    CHECK(table.algorithms().size() == 15);
    const RankSummary ours = rank_table(table, "Ours");
    CHECK(std::abs(ours.mean_value - 0.7189) <= 5e-5);
    CHECK(ours.best == 4);
    CHECK(ours.avg_rank == doctest::Approx(2.1363636364).epsilon(1e-9));

    // the published winners' aggregate RI values, as printed
    CHECK(std::abs(rank_table(table, "DTCR").mean_value - 0.7099) <= 5e-5);
    CHECK(std::abs(rank_table(table, "USSL").mean_value - 0.7095) <= 5e-5);
    CHECK(rank_table(table, "DTCR").best == 4);
    CHECK(rank_table(table, "USSL").best == 4);
}
