#pragma once

#include <numeric>
#include <optional>
#include <vector>

#include "cifair/graphs.hpp"
#include "cifair/rng.hpp"
#include "cifair/scm.hpp"

namespace helpers {

using namespace cifair;

// Random admissible (dag, partition) pair with d clusters of 1..max_vars
// variables each. Degree counts are variable-level.
inline std::pair<VariableDag, ClusterPartition> random_cluster_instance(Rng& rng, int d,
                                                                        int max_vars,
                                                                        double degree) {
    while (true) {
        std::uniform_int_distribution<int> size_pick(1, max_vars);
        std::vector<int> sizes(d);
        int d_v = 0;
        for (int i = 0; i < d; ++i) {
            sizes[i] = size_pick(rng);
            d_v += sizes[i];
        }
        if (d_v < 2) continue;
        VariableDag dag = sample_er_dag(d_v, std::min(degree, d_v - 1.0), rng);
        std::vector<int> ids(d_v);
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), rng);
        std::vector<std::vector<int>> clusters(d);
        int at = 0;
        for (int i = 0; i < d; ++i)
            for (int k = 0; k < sizes[i]; ++k) clusters[i].push_back(ids[at++]);
        ClusterPartition part(clusters);
        if (is_admissible(dag, part)) return {dag, part};
    }
}

// The connection-mark stress fixture: a hidden collider q2 inside Q whose
// child w2 lies in W, W itself a parent of A.
//   p -> q1 -> q2 <- q3 <- r,   q2 -> w2,   w1 -> a
// Clusters: P{0} Q{1,2,3} R{4} W{5,6} A{7}
inline std::pair<VariableDag, ClusterPartition> connection_mark_fixture() {
    // variables: p=0 q1=1 q2=2 q3=3 r=4 w1=5 w2=6 a=7
    VariableDag dag(8,
                    {{0, 1}, {1, 2}, {3, 2}, {4, 3}, {2, 6}, {5, 7}},
                    std::vector<NodeKind>(8, NodeKind::Continuous));
    ClusterPartition part({{0}, {1, 2, 3}, {4}, {5, 6}, {7}},
                          {Role::Plain, Role::Plain, Role::Plain, Role::Plain, Role::Sensitive});
    return {dag, part};
}

// The separation-mark fixture: prefix and suffix of <S,T,U,V> are realizable
// at the variable level but the full span is not.
//   s -> t1 -> u1,   t2 -> u2 -> v
// Clusters: S{0} T{1,2} U{3,4} V{5}
inline std::pair<VariableDag, ClusterPartition> separation_mark_fixture() {
    // variables: s=0 t1=1 t2=2 u1=3 u2=4 v=5
    VariableDag dag(6, {{0, 1}, {1, 3}, {2, 4}, {4, 5}},
                    std::vector<NodeKind>(6, NodeKind::Continuous));
    ClusterPartition part({{0}, {1, 2}, {3, 4}, {5}});
    return {dag, part};
}

}  // namespace helpers
