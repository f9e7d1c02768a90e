#include <catch2/catch_amalgamated.hpp>

#include "cifair/fairness.hpp"
#include "cifair/scm.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace cifair;

TEST_CASE("median_heuristic computes the lower median of pairwise distances") {
    Eigen::MatrixXd two(2, 1);
    two << 0, 2;
    CHECK(median_heuristic(two) == 2.0);

    Eigen::MatrixXd three(3, 1);
    three << 0, 1, 3;  // distances 1, 3, 2 -> median 2
    CHECK(median_heuristic(three) == 2.0);

    Eigen::MatrixXd four(4, 1);
    four << 0, 1, 2, 10;  // distances 1,2,10,1,9,8 -> lower median 2
    CHECK(median_heuristic(four) == 2.0);

    Eigen::MatrixXd same = Eigen::MatrixXd::Constant(5, 1, 3.0);
    CHECK(median_heuristic(same) == 1.0);

    Eigen::MatrixXd one(1, 1);
    CHECK_THROWS_AS(median_heuristic(one), std::invalid_argument);
}

TEST_CASE("rff_features approximates the Gaussian kernel") {
    Rng rng = make_rng(31);
    SECTION("self inner product per bandwidth block is near one") {
        RffMap map = build_rff_map(1, 512, 1.0, {0.5, 1.0, 2.0}, rng);
        Eigen::VectorXd y(1);
        y << 0.7;
        Eigen::VectorXd phi = rff_features(y, map);
        for (int b = 0; b < 3; ++b) {
            double norm = phi.segment(b * 512, 512).squaredNorm();
            CHECK(norm == Catch::Approx(1.0).margin(3.0 / std::sqrt(512.0)));
        }
    }
    SECTION("kernel fidelity at d_rff = 2048") {
        // per-pair noise is ~1/sqrt(2048); the tight bound applies to the
        // error over the sample, the loose one to individual pairs
        const double gamma = 0.8;
        RffMap map = build_rff_map(1, 2048, gamma, {1.0, 2.0}, rng);
        std::normal_distribution<double> gauss(0.0, 1.0);
        double sum = 0;
        int count = 0;
        for (int rep = 0; rep < 100; ++rep) {
            Eigen::VectorXd y1(1), y2(1);
            y1 << gauss(rng);
            y2 << gauss(rng);
            Eigen::VectorXd p1 = rff_features(y1, map), p2 = rff_features(y2, map);
            double d2 = (y1 - y2).squaredNorm();
            for (int b = 0; b < 2; ++b) {
                double bw = map.multipliers[b] * gamma;
                double exact = std::exp(-d2 / (2.0 * bw * bw));
                double approx = p1.segment(b * 2048, 2048).dot(p2.segment(b * 2048, 2048));
                CHECK(std::abs(approx - exact) <= 0.15);
                sum += std::abs(approx - exact);
                ++count;
            }
        }
        CHECK(sum / count <= 0.05);
    }
    SECTION("zero-frequency map gives constant features") {
        RffMap map = build_rff_map(1, 8, 1.0, {1.0}, rng);
        map.freqs.setZero();
        Eigen::VectorXd a(1), b(1);
        a << -3.0;
        b << 42.0;
        Eigen::VectorXd pa = rff_features(a, map), pb = rff_features(b, map);
        CHECK((pa - pb).norm() == 0.0);
        for (int i = 0; i < 8; ++i)
            CHECK(pa[i] == Catch::Approx(std::sqrt(2.0 / 8) * std::cos(map.phases[i])));
    }
    SECTION("dimension mismatch is rejected") {
        RffMap map = build_rff_map(2, 8, 1.0, {1.0}, rng);
        Eigen::VectorXd y(1);
        y << 0.0;
        CHECK_THROWS_AS(rff_features(y, map), std::invalid_argument);
    }
    SECTION("batch features equal per-row features") {
        RffMap map = build_rff_map(1, 16, 1.0, {1.0, 4.0}, rng);
        Eigen::MatrixXd ys(3, 1);
        ys << -1, 0, 2;
        Eigen::MatrixXd batch = rff_features_batch(ys, map);
        for (int r = 0; r < 3; ++r)
            CHECK((batch.row(r).transpose() - rff_features(ys.row(r), map)).norm() < 1e-14);
    }
}

TEST_CASE("group index partitions rows by joint sensitive/admissible value") {
    Eigen::MatrixXd f(6, 3);
    f << 0, 1, 5,
         1, 0, 6,
         0, 1, 7,
         1, 1, 8,
         0, 0, 9,
         1, 0, 10;
    GroupIndex gi = build_group_index(f, {0}, {1});
    CHECK(gi.group_count() == 4);
    CHECK(gi.n_a_values == 2);
    CHECK(gi.n_x_values == 2);
    for (int g = 0; g < gi.group_count(); ++g)
        for (int r : gi.rows[g]) CHECK(gi.group_of_row[r] == g);
    CHECK(gi.find_group({0}, {1}) >= 0);
    CHECK(gi.find_group({9}, {9}) == -1);
}

TEST_CASE("ipw_weights floors, clips, and self-normalizes") {
    PenaltyConfig cfg;
    SECTION("constant propensity: normalization restores the raw scale") {
        // half the batch in-group with propensity 0.5: raw weight 2, batch mean
        // 1, so normalization is a no-op
        Eigen::VectorXd probs = Eigen::VectorXd::Constant(8, 0.5);
        std::vector<int> rows{0, 1, 2, 3};
        auto res = ipw_weights(probs, rows, 8, cfg);
        for (int r : rows) CHECK(res.weights[r] == Catch::Approx(2.0));
        for (int r = 4; r < 8; ++r) CHECK(res.weights[r] == 0.0);
        CHECK(res.weights.sum() / 8 == Catch::Approx(1.0));
    }
    SECTION("out-of-group rows get zero weight") {
        Eigen::VectorXd probs = Eigen::VectorXd::Constant(4, 0.25);
        auto res = ipw_weights(probs, {1}, 4, cfg);
        CHECK(res.weights[0] == 0.0);
        CHECK(res.weights[1] > 0.0);
    }
    SECTION("propensity floor counts") {
        Eigen::VectorXd probs(2);
        probs << 1e-12, 0.5;
        auto res = ipw_weights(probs, {0, 1}, 2, cfg);
        CHECK(res.floored == 1);
    }
    SECTION("clipping caps the heavy tail at the batch quantile") {
        for (double q : {0.95, 0.975, 0.99}) {
            PenaltyConfig clip = cfg;
            clip.clip_quantile = q;
            Eigen::VectorXd probs = Eigen::VectorXd::Constant(200, 0.5);
            probs[0] = 1e-4;  // raw weight 1e4
            std::vector<int> rows(200);
            std::iota(rows.begin(), rows.end(), 0);
            auto res = ipw_weights(probs, rows, 200, clip);
            double mx = res.weights.maxCoeff();
            // after clipping at the q-quantile of {1e4, 2, 2, ...} the cap is 2
            CHECK(mx == res.weights[0]);
            CHECK(mx <= res.weights[1] * 1.0 + 1e-12);
        }
    }
    SECTION("empty group is an error") {
        Eigen::VectorXd probs = Eigen::VectorXd::Constant(4, 0.5);
        CHECK_THROWS_AS(ipw_weights(probs, {}, 4, cfg), empty_group_error);
    }
}

TEST_CASE("weighted_embedding averages feature rows") {
    Rng rng = make_rng(37);
    RffMap map = build_rff_map(1, 32, 1.0, {1.0}, rng);
    Eigen::MatrixXd ys(4, 1);
    ys << 0, 1, 2, 3;
    Eigen::MatrixXd phi = rff_features_batch(ys, map);
    SECTION("uniform weights reduce to the plain mean") {
        Eigen::VectorXd w = Eigen::VectorXd::Ones(4);
        Eigen::VectorXd mu = weighted_embedding(phi, w);
        CHECK((mu - phi.colwise().mean().transpose()).norm() < 1e-14);
    }
    SECTION("single weight n at row j picks out that row") {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
        w[2] = 4.0;
        Eigen::VectorXd mu = weighted_embedding(phi, w);
        CHECK((mu - phi.row(2).transpose()).norm() < 1e-14);
    }
    SECTION("all-zero weights are an error") {
        CHECK_THROWS_AS(weighted_embedding(phi, Eigen::VectorXd::Zero(4)), empty_group_error);
    }
}

TEST_CASE("IPW-weighted embedding estimates the interventional embedding") {
    // all-binary toy SCM; exact propensities and the exact interventional
    // distribution come from full enumeration
    Rng rng = make_rng(41);
    VariableDag dag(4, {{1, 0}, {0, 2}, {1, 2}, {2, 3}}, std::vector<NodeKind>(4, NodeKind::Binary));
    ClusterPartition part({{0}, {1}, {2}, {3}},
                          {Role::Sensitive, Role::Plain, Role::Plain, Role::Plain});
    Scm scm = build_scm(dag, part, ScmKind::Linear, rng);
    oracles::BinaryEnumeration oracle{&scm, 4};

    const int n = 100000;
    Dataset ds = sample_observational(scm, n, rng);
    auto h = [](const Eigen::RowVectorXd& x) { return x[2] + 0.5 * x[3]; };

    RffMap map = build_rff_map(1, 256, 1.0, {1.0}, rng);
    // group: A = 1 (cluster {0}); adjustment set Z = pa(A) = {1}
    std::vector<int> group_rows;
    Eigen::VectorXd probs(n);
    for (int r = 0; r < n; ++r) {
        // exact propensity P(A=1 | z) with z = value of node 1
        int z = static_cast<int>(ds.features(r, 1));
        double pz = oracle.event_prob([&](int bits) { return ((bits >> 1) & 1) == z; });
        double pa1z = oracle.event_prob(
            [&](int bits) { return ((bits >> 0) & 1) == 1 && ((bits >> 1) & 1) == z; });
        probs[r] = pa1z / pz;
        if (ds.features(r, 0) == 1.0) group_rows.push_back(r);
    }
    PenaltyConfig cfg;
    auto w = ipw_weights(probs, group_rows, n, cfg);
    Eigen::MatrixXd preds(n, 1);
    for (int r = 0; r < n; ++r) preds(r, 0) = h(ds.features.row(r));
    Eigen::VectorXd mu_hat = weighted_embedding(rff_features_batch(preds, map), w.weights);

    // exact interventional embedding under do(A = 1)
    std::map<int, double> fixed{{0, 1.0}};
    Eigen::VectorXd mu_exact = Eigen::VectorXd::Zero(map.feature_count());
    for (int bits = 0; bits < 16; ++bits) {
        double p = oracle.prob(bits, &fixed);
        if (p == 0) continue;
        Eigen::RowVectorXd x(4);
        for (int v = 0; v < 4; ++v) x[v] = (bits >> v) & 1;
        Eigen::VectorXd y(1);
        y << h(x);
        mu_exact += p * rff_features(y, map);
    }
    CHECK((mu_hat - mu_exact).norm() <= 0.05);
}

TEST_CASE("mellowmax is a smooth maximum") {
    SECTION("constant lists are fixed points") {
        CHECK(mellowmax({3.5, 3.5, 3.5}, 10.0) == Catch::Approx(3.5));
    }
    SECTION("closed-form two-point value") {
        CHECK(mellowmax({0.0, 1.0}, 100.0) == Catch::Approx(0.99307).margin(1e-5));
    }
    SECTION("sandwich bounds hold for random vectors") {
        Rng rng = make_rng(43);
        std::uniform_real_distribution<double> unif(-5.0, 5.0);
        std::uniform_int_distribution<int> len(1, 12);
        for (double omega : {2.0, 10.0, 100.0}) {
            for (int rep = 0; rep < 1000; ++rep) {
                std::vector<double> v(len(rng));
                for (auto& x : v) x = unif(rng);
                double mm = mellowmax(v, omega);
                double mx = *std::max_element(v.begin(), v.end());
                CHECK(mm <= mx + 1e-12);
                CHECK(mm >= mx - std::log(static_cast<double>(v.size())) / omega - 1e-12);
            }
        }
    }
    SECTION("errors") {
        CHECK_THROWS_AS(mellowmax({}, 10.0), std::invalid_argument);
        CHECK_THROWS_AS(mellowmax({1.0}, 0.0), std::invalid_argument);
    }
}

TEST_CASE("barycenter identity holds for arbitrary embeddings") {
    Rng rng = make_rng(47);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> na_pick(2, 8);
    for (int rep = 0; rep < 200; ++rep) {
        const int na = na_pick(rng), dim = 16;
        std::vector<Eigen::VectorXd> mu(na);
        for (auto& m : mu) {
            m.resize(dim);
            for (int i = 0; i < dim; ++i) m[i] = gauss(rng);
        }
        Eigen::VectorXd bary = Eigen::VectorXd::Zero(dim);
        for (const auto& m : mu) bary += m;
        bary /= na;
        double pairwise = 0, centered = 0;
        for (int a = 0; a < na; ++a) {
            for (int b = 0; b < na; ++b) pairwise += (mu[a] - mu[b]).squaredNorm();
            centered += (mu[a] - bary).squaredNorm();
        }
        CHECK(std::abs(pairwise - 2.0 * na * centered) <= 1e-9 * std::max(1.0, pairwise));
    }
}

namespace {

struct PenaltyFixture {
    Eigen::MatrixXd preds;
    std::vector<int> groups;
    GroupIndex gi;
    std::vector<Eigen::MatrixXd> probs;
    RffMap map;
    PenaltyConfig cfg;
};

PenaltyFixture make_penalty_fixture(int n, int n_cand, Rng& rng) {
    PenaltyFixture f;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 1);
    Eigen::MatrixXd feats(n, 2);
    for (int r = 0; r < n; ++r) {
        feats(r, 0) = coin(rng);
        feats(r, 1) = coin(rng);
    }
    f.gi = build_group_index(feats, {0}, {1});
    f.groups = f.gi.group_of_row;
    f.preds.resize(n, 1);
    for (int r = 0; r < n; ++r) f.preds(r, 0) = gauss(rng) + 0.5 * feats(r, 0);
    std::uniform_real_distribution<double> punif(0.15, 0.85);
    for (int m = 0; m < n_cand; ++m) {
        Eigen::MatrixXd p(n, f.gi.group_count());
        for (int r = 0; r < n; ++r) {
            double total = 0;
            for (int g = 0; g < f.gi.group_count(); ++g) {
                p(r, g) = punif(rng);
                total += p(r, g);
            }
            p.row(r) /= total;
        }
        f.probs.push_back(std::move(p));
    }
    f.map = build_rff_map(1, 32, 1.0, {1.0, 2.0}, rng);
    return f;
}

}  // namespace

TEST_CASE("penalty value and gradient") {
    Rng rng = make_rng(53);
    SECTION("identical predictions yield zero penalty and gradient") {
        auto f = make_penalty_fixture(64, 2, rng);
        f.preds.setConstant(1.3);
        PenaltyTerms t = penalty(f.preds, f.groups, f.gi, f.probs, f.map, f.cfg);
        CHECK(t.value == Catch::Approx(0.0).margin(1e-18));
        CHECK(t.dvalue_dpred.norm() == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("two groups: inner value equals half the squared distance") {
        // single candidate, two groups (no admissible split)
        Eigen::MatrixXd feats(6, 1);
        feats << 0, 0, 0, 1, 1, 1;
        GroupIndex gi = build_group_index(feats, {0}, {});
        Eigen::MatrixXd preds(6, 1);
        preds << -1.0, -0.8, -1.2, 2.0, 2.2, 1.8;
        Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(6, 2, 0.5);
        RffMap map = build_rff_map(1, 64, 1.0, {1.0}, rng);
        PenaltyConfig cfg;
        PenaltyTerms t = penalty(preds, gi.group_of_row, gi, {probs}, map, cfg);

        Eigen::MatrixXd phi = rff_features_batch(preds, map);
        auto w0 = ipw_weights(probs.col(0), gi.rows[0], 6, cfg);
        auto w1 = ipw_weights(probs.col(1), gi.rows[1], 6, cfg);
        Eigen::VectorXd mu0 = weighted_embedding(phi, w0.weights);
        Eigen::VectorXd mu1 = weighted_embedding(phi, w1.weights);
        CHECK(t.value == Catch::Approx((mu0 - mu1).squaredNorm() / 2).epsilon(1e-10));
    }
    SECTION("gradient matches central finite differences") {
        auto f = make_penalty_fixture(48, 3, rng);
        PenaltyTerms t = penalty(f.preds, f.groups, f.gi, f.probs, f.map, f.cfg);
        const double h = 1e-5;
        for (int r = 0; r < f.preds.rows(); r += 5) {
            Eigen::MatrixXd up = f.preds, dn = f.preds;
            up(r, 0) += h;
            dn(r, 0) -= h;
            double vu = penalty(up, f.groups, f.gi, f.probs, f.map, f.cfg).value;
            double vd = penalty(dn, f.groups, f.gi, f.probs, f.map, f.cfg).value;
            double fd = (vu - vd) / (2 * h);
            CHECK(t.dvalue_dpred(r, 0) ==
                  Catch::Approx(fd).epsilon(1e-4).margin(1e-8));
        }
    }
    SECTION("penalty is nonnegative and mellowmax-bounded") {
        auto f = make_penalty_fixture(80, 4, rng);
        PenaltyTerms t = penalty(f.preds, f.groups, f.gi, f.probs, f.map, f.cfg);
        CHECK(t.value >= 0.0);
        double mx = *std::max_element(t.per_candidate.begin(), t.per_candidate.end());
        CHECK(t.value <= mx + 1e-12);
        CHECK(t.value >= mx - std::log(4.0) / f.cfg.mellowmax_omega - 1e-12);
    }
    SECTION("missing candidates are an identification error") {
        auto f = make_penalty_fixture(16, 1, rng);
        CHECK_THROWS_AS(penalty(f.preds, f.groups, f.gi, {}, f.map, f.cfg), identification_error);
    }
    SECTION("groups absent from the batch are skipped") {
        auto f = make_penalty_fixture(32, 1, rng);
        // drop every row of group 0 from the index
        std::vector<int> groups = f.groups;
        for (auto& g : groups)
            if (g == 0) g = -1;
        PenaltyTerms t = penalty(f.preds, groups, f.gi, f.probs, f.map, f.cfg);
        CHECK(t.skipped_groups == 1);
    }
    SECTION("multiply-add count stays within the stated complexity") {
        auto f = make_penalty_fixture(128, 3, rng);
        penalty_op_counter() = 0;
        penalty(f.preds, f.groups, f.gi, f.probs, f.map, f.cfg);
        long long ops = penalty_op_counter();
        long long bound = 3LL * f.gi.n_a_values * f.gi.n_x_values * 128 * f.map.feature_count();
        CHECK(ops >= bound / 16);
        CHECK(ops <= bound * 16);
    }
}
