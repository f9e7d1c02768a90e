#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <set>
#include <vector>

#include "cifair/equivalence.hpp"
#include "cifair/graphs.hpp"

namespace cifair {

enum class CandidateStatus { ParentsOnly, Completed, Failed };

struct AdjustmentCandidate {
    std::vector<int> clusters;  // sorted
    CandidateStatus status = CandidateStatus::ParentsOnly;
};

struct AdjustmentFamily {
    std::vector<AdjustmentCandidate> candidates;
    int refinement_rounds = 0;
    std::vector<std::vector<int>> partition;  // cluster contents after refinement
    std::vector<Role> roles;
    std::vector<std::string> warnings;  // e.g. post-treatment conditioning

    int M() const { return static_cast<int>(candidates.size()); }
};

struct AdjustmentOptions {
    int mec_cap = 12;
    bool never_adds_middle = true;  // ablation switch for the Never branch of completion
};

namespace detail {

// Backtracking check that the undirected edges admit an acyclic orientation
// with the sibling edges of `a` fixed by S, keeping marg-arc unshielded
// triplets non-colliders and cond-arc ones colliders. Purely structural: no
// d-separation relations are consulted, so this stays independent of the MEC
// enumeration route.
class OrientationExtender {
public:
    OrientationExtender(const ClusterCpdag& g) : g_(g), d_(g.cluster_count()) {
        for (auto [u, v] : g.undirected_edges()) und_.push_back({u, v});
        for (const auto& arc : g.arcs()) {
            if (arc.state == ArcState::Never) continue;
            if (g.adjacent(arc.left, arc.right)) continue;
            rules_.push_back({arc.left, arc.mid, arc.right, arc.state == ArcState::Cond});
        }
    }

    bool extendable(int a, const std::vector<int>& parents_in) {
        std::set<int> in_s(parents_in.begin(), parents_in.end());
        std::vector<std::pair<int, int>> fixed;  // oriented undirected edges
        std::vector<std::pair<int, int>> free;
        for (auto [u, v] : und_) {
            if (u == a || v == a) {
                int other = u == a ? v : u;
                if (in_s.count(other))
                    fixed.push_back({other, a});
                else
                    fixed.push_back({a, other});
            } else {
                free.push_back({u, v});
            }
        }
        oriented_ = g_.directed_edges();
        oriented_.insert(oriented_.end(), fixed.begin(), fixed.end());
        return search(free, 0);
    }

private:
    struct Rule {
        int left, mid, right;
        bool require_collider;
    };

    bool has_edge(int p, int c) const {
        for (auto [u, v] : oriented_)
            if (u == p && v == c) return true;
        return false;
    }

    bool acyclic() const {
        std::vector<std::vector<int>> ch(d_);
        std::vector<int> indeg(d_, 0);
        for (auto [p, c] : oriented_) {
            ch[p].push_back(c);
            indeg[c]++;
        }
        std::vector<int> stack;
        for (int v = 0; v < d_; ++v)
            if (indeg[v] == 0) stack.push_back(v);
        int seen = 0;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            ++seen;
            for (int c : ch[v])
                if (--indeg[c] == 0) stack.push_back(c);
        }
        return seen == d_;
    }

    bool rules_ok() const {
        for (const auto& r : rules_) {
            bool collider = has_edge(r.left, r.mid) && has_edge(r.right, r.mid);
            if (collider != r.require_collider) return false;
        }
        return true;
    }

    bool search(const std::vector<std::pair<int, int>>& free, std::size_t at) {
        if (at == free.size()) return acyclic() && rules_ok();
        for (int dir = 0; dir < 2; ++dir) {
            auto [u, v] = free[at];
            oriented_.push_back(dir == 0 ? std::pair<int, int>{u, v} : std::pair<int, int>{v, u});
            bool ok = search(free, at + 1);
            oriented_.pop_back();
            if (ok) return true;
        }
        return false;
    }

    const ClusterCpdag& g_;
    int d_;
    std::vector<std::pair<int, int>> und_;
    std::vector<Rule> rules_;
    std::vector<std::pair<int, int>> oriented_;
};

}  // namespace detail

// Subsets of sib(a) compatible with orienting S -> a. The two local
// conditions: colliders created at a must sit on never arcs (or be shielded),
// and no sibling left outside S may reach S through the directed subgraph.
// The bare conditions overcount when orientation forcing propagates around
// undirected cycles, so candidates are additionally checked for an acyclic
// arc-consistent extension of the whole graph.
inline std::vector<std::vector<int>> enumerate_possible_parent_sets(const ClusterCpdag& g, int a) {
    if (a < 0 || a >= g.cluster_count())
        throw std::invalid_argument("enumerate_possible_parent_sets: unknown cluster");
    const auto& sib = g.siblings(a);
    const int d = g.cluster_count();

    // reach[u][v]: directed path u -> ... -> v using directed edges only
    std::vector<std::vector<char>> reach(d, std::vector<char>(d, 0));
    for (int u = 0; u < d; ++u) {
        std::vector<int> stack{u};
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int c : g.children(v))
                if (!reach[u][c]) {
                    reach[u][c] = 1;
                    stack.push_back(c);
                }
        }
    }

    detail::OrientationExtender extender(g);
    std::vector<std::vector<int>> out;
    detail::for_each_subset_smallest_first(sib, [&](const std::vector<int>& s) {
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = i + 1; j < s.size(); ++j) {
                int u = s[i], v = s[j];
                if (g.adjacent(u, v)) continue;
                const auto* arc = g.arc(u, a, v);
                if (arc == nullptr || arc->state != ArcState::Never) return false;
            }
        std::set<int> in_s(s.begin(), s.end());
        for (int u : s)
            for (int v : sib) {
                if (in_s.count(v)) continue;
                if (reach[v][u]) return false;
            }
        if (!extender.extendable(a, s)) return false;
        out.push_back(s);
        return false;  // keep enumerating; subsets are emitted smallest-first
    });
    return out;
}

/// Z^m = pa(a) u S^m for every possible parent set S^m.
inline AdjustmentFamily adjustment_candidates(const ClusterCpdag& g, int a) {
    AdjustmentFamily fam;
    auto parent_sets = enumerate_possible_parent_sets(g, a);
    const auto& pa = g.parents(a);
    for (const auto& s : parent_sets) {
        std::set<int> z(pa.begin(), pa.end());
        z.insert(s.begin(), s.end());
        fam.candidates.push_back({{z.begin(), z.end()}, CandidateStatus::ParentsOnly});
    }
    return fam;
}

// Queue-based completion (Adjustment Cluster Completion). Returns the
// augmented set, or nullopt for FAIL when a conditioned possible descendant of
// a cond-arc middle cannot be neutralized by a separation mark.
inline std::optional<std::vector<int>> complete_adjustment_set(
    const std::vector<int>& z0, int a, const ClusterCpdag& g,
    const AdjustmentOptions& opts = {}) {
    std::set<int> z(z0.begin(), z0.end());

    std::set<int> marked;  // clusters named in any connection mark in the graph
    for (const auto& arc : g.arcs())
        for (int c : arc.conn_marks) marked.insert(c);

    std::deque<std::pair<int, int>> queue;
    for (int p : z)
        if (marked.count(p))
            for (int q : g.neighbors(p))
                if (q != a) queue.push_back({p, q});

    std::set<std::pair<int, int>> processed;
    std::vector<std::uint64_t> poss_desc(g.cluster_count(), 0);
    for (int c = 0; c < g.cluster_count(); ++c)
        poss_desc[c] = detail::mask_of(possible_descendants(g, c));

    while (!queue.empty()) {
        auto [p, q] = queue.front();
        queue.pop_front();
        if (!processed.insert({p, q}).second) continue;
        for (int r : g.neighbors(q)) {
            if (r == p) continue;
            const auto* arc = g.arc(p, q, r);
            if (arc == nullptr) continue;
            switch (arc->state) {
                case ArcState::Marg:
                    z.insert(q);
                    break;
                case ArcState::Never: {
                    if (opts.never_adds_middle) z.insert(q);
                    bool hit = false;
                    for (int c : arc->conn_marks)
                        if (z.count(c)) {
                            hit = true;
                            break;
                        }
                    if (hit && r != a) queue.push_back({q, r});
                    break;
                }
                case ArcState::Cond: {
                    std::uint64_t zmask = 0;
                    for (int c : z) zmask |= 1ULL << c;
                    bool sep_in_z = false;
                    for (int c : arc->sep_marks)
                        if (z.count(c)) {
                            sep_in_z = true;
                            break;
                        }
                    if ((zmask & poss_desc[q]) != 0 && !sep_in_z) return std::nullopt;
                    break;
                }
            }
        }
    }
    return std::vector<int>(z.begin(), z.end());
}

namespace detail {

// Every back-door path out of `a` (first edge into a) must be blocked per the
// cluster d-separation rules, for every endpoint outside z.
inline bool cluster_backdoor_blocked(const ClusterDag& g, int a, const std::vector<int>& z) {
    const int d = g.cluster_count();
    std::uint64_t zmask = mask_of(z);
    std::vector<std::uint64_t> desc(d, 0);
    for (int c = 0; c < d; ++c) desc[c] = mask_of(g.descendants(c));

    std::vector<int> path{a};
    std::vector<char> on_path(d, 0);
    on_path[a] = 1;
    bool leaked = false;
    auto blocked = [&]() {
        std::uint64_t pm = 0;
        for (int c : path) pm |= 1ULL << c;
        for (std::size_t i = 0; i + 2 < path.size(); ++i) {
            const auto* arc = g.arc(path[i], path[i + 1], path[i + 2]);
            if (arc != nullptr && arc_blocks(*arc, zmask, pm, desc[arc->mid])) return true;
        }
        return false;
    };
    auto dfs = [&](auto&& self, int v) -> void {
        if (leaked) return;
        if (blocked()) return;  // extensions stay blocked
        if (!((zmask >> v) & 1)) {
            leaked = true;  // unblocked back-door path reaching a non-conditioned cluster
            return;
        }
        for (int u : g.neighbors(v)) {
            if (leaked) return;
            if (on_path[u]) continue;
            on_path[u] = 1;
            path.push_back(u);
            self(self, u);
            path.pop_back();
            on_path[u] = 0;
        }
    };
    for (int u : g.parents(a)) {
        if (leaked) break;
        on_path[u] = 1;
        path.push_back(u);
        dfs(dfs, u);
        path.pop_back();
        on_path[u] = 0;
    }
    return !leaked;
}

}  // namespace detail

// Conditioning on descendants of the intervened cluster risks post-treatment
// bias; completion can add such clusters, so flag them.
inline std::vector<std::string> post_treatment_warnings(const ClusterCpdag& g, int a,
                                                        const std::vector<AdjustmentCandidate>& cands) {
    std::vector<std::string> warnings;
    auto desc = definite_descendants(g, a);
    for (std::size_t m = 0; m < cands.size(); ++m) {
        if (cands[m].status != CandidateStatus::Completed) continue;
        for (int c : cands[m].clusters)
            if (std::binary_search(desc.begin(), desc.end(), c))
                warnings.push_back("candidate " + std::to_string(m) + " conditions on cluster " +
                                   std::to_string(c) + ", a definite descendant of " +
                                   std::to_string(a));
    }
    return warnings;
}

namespace detail {

inline ClusterPartition split_clusters(const ClusterPartition& part, const std::set<int>& to_split) {
    std::vector<std::vector<int>> clusters;
    std::vector<Role> roles;
    for (int i = 0; i < part.cluster_count(); ++i) {
        if (to_split.count(i) && part.cluster(i).size() > 1) {
            for (int v : part.cluster(i)) {
                clusters.push_back({v});
                roles.push_back(part.role(i));
            }
        } else {
            clusters.push_back(part.cluster(i));
            roles.push_back(part.role(i));
        }
    }
    return ClusterPartition(std::move(clusters), std::move(roles));
}

}  // namespace detail

// Full enumeration pipeline: ground-truth cluster DAG -> MEC -> CPDAG ->
// candidates -> completion, refining (splitting connection-marked clusters
// into singletons) whenever completion fails. With an admissible cluster the
// procedure is run for it as well and per-candidate unions are taken.
inline AdjustmentFamily enumerate_adjustment_sets(const VariableDag& dag,
                                                  const ClusterPartition& partition,
                                                  const AdjustmentOptions& opts = {}) {
    ClusterPartition part = partition;
    int rounds = 0;
    const int max_rounds = partition.variable_count();

    while (true) {
        ClusterDag cd = build_cluster_dag(dag, part);
        MecFamily mec = enumerate_cluster_mec(cd, opts.mec_cap);
        ClusterCpdag cpdag = build_cluster_cpdag(mec);

        int a = part.sensitive_cluster();
        auto ad = part.find_role(Role::Admissible);

        auto run = [&](int target) {
            auto fam = adjustment_candidates(cpdag, target);
            std::vector<std::pair<std::vector<int>, bool>> done;  // (set, ok)
            for (auto& cand : fam.candidates) {
                auto completed = complete_adjustment_set(cand.clusters, target, cpdag, opts);
                if (completed)
                    done.push_back({std::move(*completed), true});
                else
                    done.push_back({cand.clusters, false});
            }
            return done;
        };

        auto done_a = run(a);
        std::vector<std::pair<std::vector<int>, bool>> done_ad;
        if (ad) done_ad = run(*ad);

        bool any_fail = false;
        for (const auto& [_, ok] : done_a) any_fail = any_fail || !ok;
        for (const auto& [_, ok] : done_ad) any_fail = any_fail || !ok;

        if (any_fail) {
            std::set<int> to_split;
            for (const auto& arc : cpdag.arcs())
                for (int c : arc.conn_marks)
                    if (part.role(c) == Role::Plain && part.cluster(c).size() > 1) to_split.insert(c);
            if (to_split.empty()) {
                // Nothing mark-named left to split; fall back to a full split so
                // the loop reaches the variable-level graph and terminates.
                for (int c = 0; c < part.cluster_count(); ++c)
                    if (part.role(c) == Role::Plain && part.cluster(c).size() > 1) to_split.insert(c);
            }
            if (!to_split.empty() && rounds < max_rounds) {
                part = detail::split_clusters(part, to_split);
                ++rounds;
                continue;
            }
            // Terminal state: report what we have, failures included.
            AdjustmentFamily fam;
            fam.refinement_rounds = rounds;
            fam.partition = part.clusters();
            fam.roles = part.roles();
            std::set<std::vector<int>> seen;
            auto emit = [&](const std::vector<std::pair<std::vector<int>, bool>>& done) {
                for (const auto& [zs, ok] : done) {
                    std::vector<int> cleaned;
                    for (int c : zs)
                        if (c != a && (!ad || c != *ad)) cleaned.push_back(c);
                    if (seen.insert(cleaned).second)
                        fam.candidates.push_back(
                            {cleaned, ok ? CandidateStatus::Completed : CandidateStatus::Failed});
                }
            };
            emit(done_a);
            emit(done_ad);
            return fam;
        }

        AdjustmentFamily fam;
        fam.refinement_rounds = rounds;
        fam.partition = part.clusters();
        fam.roles = part.roles();
        std::set<std::vector<int>> seen;
        auto add_candidate = [&](std::vector<int> zs) {
            std::vector<int> cleaned;
            for (int c : zs)
                if (c != a && (!ad || c != *ad)) cleaned.push_back(c);
            std::sort(cleaned.begin(), cleaned.end());
            if (seen.insert(cleaned).second)
                fam.candidates.push_back({cleaned, CandidateStatus::Completed});
        };
        if (!ad) {
            for (auto& [zs, ok] : done_a) add_candidate(zs);
        } else {
            for (auto& [za, ok_a] : done_a)
                for (auto& [zd, ok_d] : done_ad) {
                    std::set<int> u(za.begin(), za.end());
                    u.insert(zd.begin(), zd.end());
                    add_candidate({u.begin(), u.end()});
                }
        }
        fam.warnings = post_treatment_warnings(cpdag, a, fam.candidates);
        return fam;
    }
}

}  // namespace cifair
