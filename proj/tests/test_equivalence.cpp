#include <catch2/catch_amalgamated.hpp>

#include "cifair/equivalence.hpp"
#include "cifair/graphs.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace cifair;

namespace {

IndependenceArc make_arc(int l, int m, int r, ArcState s, std::vector<int> conn = {},
                         std::vector<int> sep = {}) {
    IndependenceArc a;
    a.left = l;
    a.mid = m;
    a.right = r;
    a.state = s;
    a.conn_marks = std::move(conn);
    a.sep_marks = std::move(sep);
    return a;
}

}  // namespace

TEST_CASE("dsep_clusters follows the three arc conditions") {
    SECTION("never collider stays separated even with the middle conditioned") {
        ClusterDag g(3, {{0, 1}, {2, 1}}, {make_arc(0, 1, 2, ArcState::Never)});
        CHECK(dsep_clusters(g, {0}, {2}, {1}));
        CHECK(dsep_clusters(g, {0}, {2}, {}));
    }
    SECTION("marg chain blocked by conditioning the middle") {
        ClusterDag g(3, {{0, 1}, {1, 2}}, {make_arc(0, 1, 2, ArcState::Marg)});
        CHECK(dsep_clusters(g, {0}, {2}, {1}));
        CHECK_FALSE(dsep_clusters(g, {0}, {2}, {}));
    }
    SECTION("cond collider: conditioning a connection-marked cluster connects") {
        // clusters: 0 - 1 - 2 with extra cluster 3 marked on the arc
        ClusterDag g(4, {{0, 1}, {2, 1}, {1, 3}}, {make_arc(0, 1, 2, ArcState::Cond, {3})});
        CHECK(dsep_clusters(g, {0}, {2}, {}));
        CHECK_FALSE(dsep_clusters(g, {0}, {2}, {3}));  // condition 2(b) fails
        CHECK_FALSE(dsep_clusters(g, {0}, {2}, {1}));  // condition 2(a) fails
    }
    SECTION("cond arc blocked by a true descendant in z") {
        ClusterDag g(4, {{0, 1}, {2, 1}, {1, 3}}, {make_arc(0, 1, 2, ArcState::Cond)});
        CHECK_FALSE(dsep_clusters(g, {0}, {2}, {3}));  // 3 is a descendant of the middle
    }
    SECTION("separation mark on a path cluster blocks regardless of z") {
        ClusterDag g(4, {{0, 1}, {1, 2}, {2, 3}},
                     {make_arc(0, 1, 2, ArcState::Marg, {}, {3}), make_arc(1, 2, 3, ArcState::Marg)});
        CHECK(dsep_clusters(g, {0}, {3}, {}));        // mark names cluster 3, on the path
        CHECK_FALSE(dsep_clusters(g, {0}, {2}, {}));  // cluster 3 not on this path
    }
    SECTION("adjacent clusters are never separated") {
        ClusterDag g(2, {{0, 1}}, {});
        CHECK_FALSE(dsep_clusters(g, {0}, {1}, {}));
    }
    SECTION("input validation") {
        ClusterDag g(2, {{0, 1}}, {});
        CHECK_THROWS_AS(dsep_clusters(g, {0}, {5}, {}), std::invalid_argument);
        CHECK_THROWS_AS(dsep_clusters(g, {0}, {1}, {0}), std::invalid_argument);
    }
}

TEST_CASE("enumerate_cluster_mec matches the worked examples") {
    SECTION("two clusters, one edge: both orientations") {
        ClusterDag g(2, {{0, 1}}, {});
        MecFamily fam = enumerate_cluster_mec(g);
        CHECK(fam.members.size() == 2);
    }
    SECTION("three-cluster marg chain: the collider is excluded") {
        VariableDag chain(3, {{0, 1}, {1, 2}});
        ClusterPartition p({{0}, {1}, {2}});
        ClusterDag cd = build_cluster_dag(chain, p);
        MecFamily fam = enumerate_cluster_mec(cd);
        REQUIRE(fam.members.size() == 3);
        for (const auto& m : fam.members) {
            bool collider = m.has_edge(0, 1) && m.has_edge(2, 1);
            CHECK_FALSE(collider);
        }
    }
    SECTION("three-cluster cond collider: only the collider matches") {
        VariableDag collider(3, {{0, 1}, {2, 1}});
        ClusterPartition p({{0}, {1}, {2}});
        ClusterDag cd = build_cluster_dag(collider, p);
        MecFamily fam = enumerate_cluster_mec(cd);
        REQUIRE(fam.members.size() == 1);
        CHECK(fam.members[0].has_edge(0, 1));
        CHECK(fam.members[0].has_edge(2, 1));
    }
    SECTION("cluster cap raises a capacity error") {
        ClusterDag g(3, {{0, 1}, {1, 2}}, {});
        CHECK_THROWS_AS(enumerate_cluster_mec(g, 2), capacity_error);
    }
    SECTION("generator is always a member") {
        Rng rng = make_rng(51);
        for (int rep = 0; rep < 20; ++rep) {
            auto [dag, part] = helpers::random_cluster_instance(rng, 5, 3, 2.0);
            ClusterDag cd = build_cluster_dag(dag, part);
            MecFamily fam = enumerate_cluster_mec(cd);
            bool found = false;
            for (const auto& m : fam.members) found = found || m.edges() == cd.edges();
            CHECK(found);
        }
    }
}

TEST_CASE("dsep_clusters agrees across all MEC members") {
    Rng rng = make_rng(53);
    for (int rep = 0; rep < 10; ++rep) {
        auto [dag, part] = helpers::random_cluster_instance(rng, 4, 3, 2.0);
        ClusterDag cd = build_cluster_dag(dag, part);
        MecFamily fam = enumerate_cluster_mec(cd);
        const int d = part.cluster_count();
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) {
                std::vector<int> rest;
                for (int c = 0; c < d; ++c)
                    if (c != i && c != j) rest.push_back(c);
                for (int bits = 0; bits < (1 << rest.size()); ++bits) {
                    std::vector<int> z;
                    for (std::size_t k = 0; k < rest.size(); ++k)
                        if ((bits >> k) & 1) z.push_back(rest[k]);
                    bool gen = dsep_clusters(cd, {i}, {j}, z);
                    for (const auto& m : fam.members) CHECK(dsep_clusters(m, {i}, {j}, z) == gen);
                }
            }
    }
}

TEST_CASE("build_cluster_cpdag merges orientations") {
    SECTION("single member: everything directed") {
        VariableDag collider(3, {{0, 1}, {2, 1}});
        ClusterPartition p({{0}, {1}, {2}});
        MecFamily fam = enumerate_cluster_mec(build_cluster_dag(collider, p));
        ClusterCpdag cp = build_cluster_cpdag(fam);
        CHECK(cp.undirected_edges().empty());
        CHECK(cp.directed_edges().size() == 2);
    }
    SECTION("three-cluster chain: both edges undirected") {
        VariableDag chain(3, {{0, 1}, {1, 2}});
        ClusterPartition p({{0}, {1}, {2}});
        MecFamily fam = enumerate_cluster_mec(build_cluster_dag(chain, p));
        ClusterCpdag cp = build_cluster_cpdag(fam);
        CHECK(cp.directed_edges().empty());
        CHECK(cp.undirected_edges().size() == 2);
    }
    SECTION("empty MEC is rejected") {
        MecFamily fam{{}, ClusterDag(1, {}, {})};
        CHECK_THROWS_AS(build_cluster_cpdag(fam), std::invalid_argument);
    }
    SECTION("directed edges appear identically oriented in every member") {
        Rng rng = make_rng(61);
        for (int rep = 0; rep < 15; ++rep) {
            auto [dag, part] = helpers::random_cluster_instance(rng, 5, 3, 2.0);
            MecFamily fam = enumerate_cluster_mec(build_cluster_dag(dag, part));
            ClusterCpdag cp = build_cluster_cpdag(fam);
            for (auto [p, c] : cp.directed_edges())
                for (const auto& m : fam.members) CHECK(m.has_edge(p, c));
            for (auto [u, v] : cp.undirected_edges()) {
                bool fwd = false, bwd = false;
                for (const auto& m : fam.members) {
                    fwd = fwd || m.has_edge(u, v);
                    bwd = bwd || m.has_edge(v, u);
                }
                CHECK(fwd);
                CHECK(bwd);
            }
        }
    }
}

TEST_CASE("collider structures stay directed in the CPDAG") {
    // hiring-style fixture: three mutually non-adjacent clusters all feeding
    // the test-score cluster; the cond arcs pin every edge
    VariableDag dag(7, {{0, 2}, {5, 2}, {6, 2}});
    ClusterPartition part({{0, 1}, {2, 3}, {4, 5}, {6}});
    MecFamily fam = enumerate_cluster_mec(build_cluster_dag(dag, part));
    ClusterCpdag cp = build_cluster_cpdag(fam);
    CHECK(cp.undirected_edges().empty());
    CHECK(cp.directed_edges() == std::vector<std::pair<int, int>>{{0, 1}, {2, 1}, {3, 1}});
}

TEST_CASE("CPDAG construction is idempotent across members") {
    Rng rng = make_rng(67);
    for (int rep = 0; rep < 8; ++rep) {
        auto [dag, part] = helpers::random_cluster_instance(rng, 4, 3, 2.0);
        MecFamily fam = enumerate_cluster_mec(build_cluster_dag(dag, part));
        ClusterCpdag ref = build_cluster_cpdag(fam);
        for (const auto& m : fam.members) {
            MecFamily fam2 = enumerate_cluster_mec(m);
            ClusterCpdag cp = build_cluster_cpdag(fam2);
            CHECK(cp.directed_edges() == ref.directed_edges());
            CHECK(cp.undirected_edges() == ref.undirected_edges());
        }
    }
}

TEST_CASE("descendant queries on CPDAGs") {
    SECTION("fully directed graph: ordinary descendants") {
        ClusterCpdag g(3, {{0, 1}, {1, 2}}, {}, {});
        CHECK(possible_descendants(g, 0) == std::vector<int>{1, 2});
        CHECK(definite_descendants(g, 0) == std::vector<int>{1, 2});
    }
    SECTION("single undirected edge") {
        ClusterCpdag g(2, {}, {{0, 1}}, {});
        CHECK(possible_descendants(g, 0) == std::vector<int>{1});
        CHECK(definite_descendants(g, 0).empty());
    }
    SECTION("star with directed edges") {
        ClusterCpdag g(3, {{0, 1}, {0, 2}}, {}, {});
        CHECK(definite_descendants(g, 0) == std::vector<int>{1, 2});
    }
    SECTION("unknown cluster is rejected") {
        ClusterCpdag g(2, {}, {{0, 1}}, {});
        CHECK_THROWS_AS(possible_descendants(g, 7), std::invalid_argument);
        CHECK_THROWS_AS(definite_descendants(g, -1), std::invalid_argument);
    }
    SECTION("sandwich: definite within member truth within possible") {
        Rng rng = make_rng(71);
        for (int rep = 0; rep < 15; ++rep) {
            auto [dag, part] = helpers::random_cluster_instance(rng, 6, 3, 2.0);
            MecFamily fam = enumerate_cluster_mec(build_cluster_dag(dag, part));
            ClusterCpdag cp = build_cluster_cpdag(fam);
            for (int q = 0; q < part.cluster_count(); ++q) {
                auto definite = definite_descendants(cp, q);
                auto possible = possible_descendants(cp, q);
                for (const auto& m : fam.members) {
                    auto truth = m.descendants(q);
                    for (int c : definite)
                        CHECK(std::find(truth.begin(), truth.end(), c) != truth.end());
                    for (int c : truth)
                        CHECK(std::find(possible.begin(), possible.end(), c) != possible.end());
                }
            }
        }
    }
}

TEST_CASE("faithfulness check flags incomplete cluster representations") {
    // the separation-mark fixture is faithful once marks are in place
    auto [dag, part] = helpers::separation_mark_fixture();
    ClusterDag cd = build_cluster_dag(dag, part);
    CHECK(is_cluster_faithful(dag, part, cd));

    // stripping the marks breaks completeness
    std::vector<IndependenceArc> stripped;
    for (auto a : cd.arcs()) {
        a.sep_marks.clear();
        stripped.push_back(a);
    }
    ClusterDag bare(cd.cluster_count(), cd.edges(), stripped);
    CHECK_FALSE(is_cluster_faithful(dag, part, bare));
}
