#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "cifair/errors.hpp"
#include "cifair/graphs.hpp"

namespace cifair {

namespace detail {

inline std::uint64_t mask_of(const std::vector<int>& ids) {
    std::uint64_t m = 0;
    for (int i : ids) m |= (1ULL << i);
    return m;
}

// Blocking test for one arc on a path, Def 3.4 conditions. `path_mask` covers
// every cluster on the path, `z` the conditioning clusters, `desc` the middle's
// descendants in the graph being queried.
inline bool arc_blocks(const IndependenceArc& arc, std::uint64_t z, std::uint64_t path_mask,
                       std::uint64_t desc_mid) {
    const std::uint64_t conn = mask_of(arc.conn_marks);
    const std::uint64_t sep = mask_of(arc.sep_marks);
    const bool sep_on_path = (sep & path_mask) != 0;
    const std::uint64_t mid_bit = 1ULL << arc.mid;
    switch (arc.state) {
        case ArcState::Marg:
            return (z & mid_bit) != 0 || sep_on_path;
        case ArcState::Cond:
            return ((z & (mid_bit | desc_mid)) == 0 && (z & conn) == 0) || sep_on_path;
        case ArcState::Never:
            return (z & conn) == 0;
    }
    return false;
}

}  // namespace detail

// Cluster-level d-separation (arcs and marks included). A path is separated
// iff some consecutive triplet's arc blocks it; a pair is separated iff every
// skeleton path between them is.
inline bool dsep_clusters(const ClusterDag& g, const std::vector<int>& x, const std::vector<int>& y,
                          const std::vector<int>& z) {
    const int d = g.cluster_count();
    auto check_ids = [&](const std::vector<int>& s) {
        for (int c : s)
            if (c < 0 || c >= d) throw std::invalid_argument("dsep_clusters: unknown cluster id");
    };
    check_ids(x);
    check_ids(y);
    check_ids(z);
    std::uint64_t mx = detail::mask_of(x), my = detail::mask_of(y), mz = detail::mask_of(z);
    if ((mx & my) || (mx & mz) || (my & mz))
        throw std::invalid_argument("dsep_clusters: sets must be disjoint");
    if (!mx || !my) return true;

    std::vector<std::uint64_t> desc(d, 0);
    for (int c = 0; c < d; ++c) desc[c] = detail::mask_of(g.descendants(c));

    // DFS over simple skeleton paths from x; a path reaching y with no
    // blocking arc witnesses connection.
    std::vector<int> path;
    std::vector<char> on_path(d, 0);
    bool connected = false;
    auto blocked = [&](const std::vector<int>& p) {
        std::uint64_t pm = 0;
        for (int c : p) pm |= (1ULL << c);
        for (std::size_t i = 0; i + 2 < p.size(); ++i) {
            const auto* a = g.arc(p[i], p[i + 1], p[i + 2]);
            if (a != nullptr && detail::arc_blocks(*a, mz, pm, desc[a->mid])) return true;
        }
        return false;
    };
    auto dfs = [&](auto&& self, int v) -> void {
        if (connected) return;
        path.push_back(v);
        on_path[v] = 1;
        // blocking is monotone under extension: a blocked prefix stays blocked
        if (!blocked(path)) {
            if ((my >> v) & 1) {
                connected = true;
            } else {
                for (int u : g.neighbors(v)) {
                    if (connected) break;
                    if (on_path[u]) continue;
                    self(self, u);
                }
            }
        }
        on_path[v] = 0;
        path.pop_back();
    };
    for (int v : x) {
        if (connected) break;
        dfs(dfs, v);
    }
    return !connected;
}

/// Shared representation of a cluster Markov equivalence class.
class ClusterCpdag {
public:
    ClusterCpdag(int cluster_count, std::vector<std::pair<int, int>> directed,
                 std::vector<std::pair<int, int>> undirected, std::vector<IndependenceArc> arcs)
        : cluster_count_(cluster_count),
          directed_(std::move(directed)),
          undirected_(std::move(undirected)),
          arcs_(std::move(arcs)) {
        std::sort(directed_.begin(), directed_.end());
        for (auto& e : undirected_)
            if (e.first > e.second) std::swap(e.first, e.second);
        std::sort(undirected_.begin(), undirected_.end());
        nbr_.assign(cluster_count_, {});
        dir_children_.assign(cluster_count_, {});
        dir_parents_.assign(cluster_count_, {});
        und_nbr_.assign(cluster_count_, {});
        for (auto [p, c] : directed_) {
            dir_children_[p].push_back(c);
            dir_parents_[c].push_back(p);
            nbr_[p].push_back(c);
            nbr_[c].push_back(p);
        }
        for (auto [u, v] : undirected_) {
            und_nbr_[u].push_back(v);
            und_nbr_[v].push_back(u);
            nbr_[u].push_back(v);
            nbr_[v].push_back(u);
        }
        for (auto* vs : {&nbr_, &dir_children_, &dir_parents_, &und_nbr_})
            for (auto& v : *vs) std::sort(v.begin(), v.end());
        for (auto& a : arcs_) {
            if (a.left > a.right) std::swap(a.left, a.right);
            arc_index_[{a.left, a.mid, a.right}] = &a;
        }
    }

    int cluster_count() const { return cluster_count_; }
    const std::vector<std::pair<int, int>>& directed_edges() const { return directed_; }
    const std::vector<std::pair<int, int>>& undirected_edges() const { return undirected_; }
    const std::vector<IndependenceArc>& arcs() const { return arcs_; }
    const std::vector<int>& neighbors(int c) const { return nbr_.at(c); }
    const std::vector<int>& parents(int c) const { return dir_parents_.at(c); }
    const std::vector<int>& children(int c) const { return dir_children_.at(c); }
    const std::vector<int>& siblings(int c) const { return und_nbr_.at(c); }

    bool adjacent(int u, int v) const {
        return std::binary_search(nbr_.at(u).begin(), nbr_.at(u).end(), v);
    }
    bool has_directed(int p, int c) const {
        return std::binary_search(dir_children_.at(p).begin(), dir_children_.at(p).end(), c);
    }
    bool has_undirected(int u, int v) const {
        return std::binary_search(und_nbr_.at(u).begin(), und_nbr_.at(u).end(), v);
    }

    const IndependenceArc* arc(int i, int k, int j) const {
        auto it = arc_index_.find({std::min(i, j), k, std::max(i, j)});
        return it == arc_index_.end() ? nullptr : it->second;
    }

private:
    int cluster_count_;
    std::vector<std::pair<int, int>> directed_, undirected_;
    std::vector<IndependenceArc> arcs_;
    std::vector<std::vector<int>> nbr_, dir_children_, dir_parents_, und_nbr_;
    std::map<std::tuple<int, int, int>, const IndependenceArc*> arc_index_;
};

struct MecFamily {
    std::vector<ClusterDag> members;  // generator included
    ClusterDag generator;
};

namespace detail {

// Orientation-independent path data for the relation engine. Paths that are
// blocked for every Z (separation mark on path, or never arc with no
// connection marks) are dropped up front; pairs with such coverage need no
// per-Z work at all.
struct RelArc {
    ArcState state;
    int mid;
    std::uint64_t conn;
};
struct RelPath {
    std::vector<RelArc> arcs;
};
struct RelPair {
    int a, b;
    std::uint64_t zpool;  // clusters allowed in Z
    std::vector<RelPath> paths;
};

class RelationEngine {
public:
    RelationEngine(const ClusterDag& g) : d_(g.cluster_count()) {
        for (int a = 0; a < d_; ++a)
            for (int b = a + 1; b < d_; ++b) {
                if (g.adjacent(a, b)) continue;  // never separable, orientation-free
                RelPair pr;
                pr.a = a;
                pr.b = b;
                pr.zpool = ((d_ >= 64 ? ~0ULL : (1ULL << d_) - 1)) & ~(1ULL << a) & ~(1ULL << b);
                collect_paths(g, a, b, pr);
                pairs_.push_back(std::move(pr));
            }
    }

    // Separation bit per (pair, Z) in a fixed enumeration order.
    std::vector<char> relations(const std::vector<std::uint64_t>& desc) const {
        std::vector<char> out;
        for (const auto& pr : pairs_) {
            std::uint64_t z = 0;
            while (true) {
                out.push_back(separated(pr, z, desc));
                if (z == pr.zpool) break;
                z = (z - pr.zpool) & pr.zpool;  // next subset of zpool
            }
        }
        return out;
    }

    bool equal_relations(const std::vector<char>& reference,
                         const std::vector<std::uint64_t>& desc) const {
        std::size_t idx = 0;
        for (const auto& pr : pairs_) {
            std::uint64_t z = 0;
            while (true) {
                if (separated(pr, z, desc) != reference[idx++]) return false;
                if (z == pr.zpool) break;
                z = (z - pr.zpool) & pr.zpool;
            }
        }
        return true;
    }

private:
    static bool separated(const RelPair& pr, std::uint64_t z,
                          const std::vector<std::uint64_t>& desc) {
        for (const auto& path : pr.paths) {
            bool blocked = false;
            for (const auto& a : path.arcs) {
                switch (a.state) {
                    case ArcState::Marg:
                        blocked = (z >> a.mid) & 1;
                        break;
                    case ArcState::Cond:
                        blocked = (z & ((1ULL << a.mid) | desc[a.mid] | a.conn)) == 0;
                        break;
                    case ArcState::Never:
                        blocked = (z & a.conn) == 0;
                        break;
                }
                if (blocked) break;
            }
            if (!blocked) return false;
        }
        return true;
    }

    void collect_paths(const ClusterDag& g, int a, int b, RelPair& pr) {
        std::vector<int> path{a};
        std::vector<char> on_path(d_, 0);
        on_path[a] = 1;
        auto dfs = [&](auto&& self, int v) -> void {
            if (v == b) {
                std::uint64_t pm = 0;
                for (int c : path) pm |= (1ULL << c);
                RelPath rp;
                bool always_blocked = false;
                for (std::size_t i = 0; i + 2 < path.size(); ++i) {
                    const auto* arc = g.arc(path[i], path[i + 1], path[i + 2]);
                    if (arc == nullptr) continue;
                    if ((mask_of(arc->sep_marks) & pm) != 0) {
                        always_blocked = true;  // sep mark on path: blocked for all Z
                        break;
                    }
                    std::uint64_t conn = mask_of(arc->conn_marks);
                    if (arc->state == ArcState::Never && conn == 0) {
                        always_blocked = true;
                        break;
                    }
                    rp.arcs.push_back({arc->state, arc->mid, conn});
                }
                if (!always_blocked) pr.paths.push_back(std::move(rp));
                return;
            }
            for (int u : g.neighbors(v)) {
                if (on_path[u]) continue;
                on_path[u] = 1;
                path.push_back(u);
                self(self, u);
                path.pop_back();
                on_path[u] = 0;
            }
        };
        for (int u : g.neighbors(a)) {
            on_path[u] = 1;
            path.push_back(u);
            dfs(dfs, u);
            path.pop_back();
            on_path[u] = 0;
        }
    }

    int d_;
    std::vector<RelPair> pairs_;
};

}  // namespace detail

// All acyclic orientations of the generator's skeleton (annotations held
// fixed) whose complete cluster d-separation relation equals the generator's.
// Arc semantics constrain unshielded triplets locally: a marg arc is
// incompatible with a collider at its middle and a cond arc compels one.
// Beyond that, orientation enters the relations only through descendants of
// cond-arc middles, so relation checks are memoized on that signature.
inline MecFamily enumerate_cluster_mec(const ClusterDag& g, int cluster_cap = 12) {
    const int d = g.cluster_count();
    if (d > cluster_cap) throw capacity_error("enumerate_cluster_mec: cluster count exceeds cap");

    std::vector<std::pair<int, int>> skel;
    for (auto [p, c] : g.edges()) skel.push_back({std::min(p, c), std::max(p, c)});
    std::sort(skel.begin(), skel.end());
    skel.erase(std::unique(skel.begin(), skel.end()), skel.end());
    const int m = static_cast<int>(skel.size());
    if (m > 20) throw capacity_error("enumerate_cluster_mec: skeleton too large to enumerate");

    struct TripletRule {
        int left, mid, right;
        bool require_collider;  // cond: collider; marg: non-collider
    };
    std::vector<TripletRule> rules;
    for (const auto& a : g.arcs()) {
        if (a.state == ArcState::Never) continue;
        if (g.adjacent(a.left, a.right)) continue;  // manipulated triplets unconstrained
        TripletRule r{a.left, a.mid, a.right, a.state == ArcState::Cond};
        // Unfaithful generators can violate the rule themselves; such a rule is
        // dropped so the generator always belongs to its own class.
        bool gen_collider = g.has_edge(r.left, r.mid) && g.has_edge(r.right, r.mid);
        if (gen_collider == r.require_collider) rules.push_back(r);
    }

    detail::RelationEngine engine(g);
    std::vector<std::uint64_t> gen_desc(d, 0);
    for (int c = 0; c < d; ++c) gen_desc[c] = detail::mask_of(g.descendants(c));
    const std::vector<char> reference = engine.relations(gen_desc);

    std::set<int> cond_mids;
    for (const auto& a : g.arcs())
        if (a.state == ArcState::Cond) cond_mids.insert(a.mid);

    std::map<std::vector<std::uint64_t>, bool> memo;
    MecFamily fam{{}, g};

    std::vector<std::vector<int>> children(d);
    std::vector<int> indeg(d, 0);
    for (std::uint32_t bits = 0; bits < (1u << m); ++bits) {
        for (auto& c : children) c.clear();
        std::fill(indeg.begin(), indeg.end(), 0);
        std::vector<std::pair<int, int>> edges(m);
        for (int e = 0; e < m; ++e) {
            auto [u, v] = skel[e];
            int p = ((bits >> e) & 1) ? v : u;
            int c = ((bits >> e) & 1) ? u : v;
            edges[e] = {p, c};
            children[p].push_back(c);
            indeg[c]++;
        }
        // acyclicity
        {
            std::vector<int> deg = indeg, stack;
            for (int v = 0; v < d; ++v)
                if (deg[v] == 0) stack.push_back(v);
            int seen = 0;
            while (!stack.empty()) {
                int v = stack.back();
                stack.pop_back();
                ++seen;
                for (int c : children[v])
                    if (--deg[c] == 0) stack.push_back(c);
            }
            if (seen != d) continue;
        }
        // local arc-orientation consistency at unshielded triplets
        {
            auto oriented = [&](int p, int c) {
                return std::find(children[p].begin(), children[p].end(), c) != children[p].end();
            };
            bool ok_rules = true;
            for (const auto& r : rules) {
                bool collider = oriented(r.left, r.mid) && oriented(r.right, r.mid);
                if (collider != r.require_collider) {
                    ok_rules = false;
                    break;
                }
            }
            if (!ok_rules) continue;
        }
        std::vector<std::uint64_t> desc(d, 0);
        for (int c = 0; c < d; ++c) {
            std::vector<int> stack{c};
            std::uint64_t mask = 0;
            while (!stack.empty()) {
                int u = stack.back();
                stack.pop_back();
                for (int ch : children[u])
                    if (!((mask >> ch) & 1)) {
                        mask |= 1ULL << ch;
                        stack.push_back(ch);
                    }
            }
            desc[c] = mask;
        }
        std::vector<std::uint64_t> sig;
        sig.reserve(cond_mids.size());
        for (int q : cond_mids) sig.push_back(desc[q]);
        auto it = memo.find(sig);
        bool ok;
        if (it != memo.end()) {
            ok = it->second;
        } else {
            ok = engine.equal_relations(reference, desc);
            memo.emplace(std::move(sig), ok);
        }
        if (ok) fam.members.emplace_back(d, std::move(edges), g.arcs());
    }
    return fam;
}

/// Edge directed iff oriented identically in every member; arcs and marks are
/// those shared by all members (annotations are held fixed, so the
/// generator's).
inline ClusterCpdag build_cluster_cpdag(const MecFamily& mec) {
    if (mec.members.empty()) throw std::invalid_argument("build_cluster_cpdag: empty MEC");
    const auto& first = mec.members.front();
    const int d = first.cluster_count();
    std::set<std::pair<int, int>> skel;
    for (auto [p, c] : first.edges()) skel.insert({std::min(p, c), std::max(p, c)});
    std::vector<std::pair<int, int>> directed, undirected;
    for (auto [u, v] : skel) {
        bool all_uv = true, all_vu = true;
        for (const auto& mem : mec.members) {
            all_uv = all_uv && mem.has_edge(u, v);
            all_vu = all_vu && mem.has_edge(v, u);
        }
        if (all_uv)
            directed.push_back({u, v});
        else if (all_vu)
            directed.push_back({v, u});
        else
            undirected.push_back({u, v});
    }
    // Arc present iff present (same triplet and state) in every member.
    std::vector<IndependenceArc> arcs;
    for (const auto& a : mec.generator.arcs()) {
        bool in_all = true;
        for (const auto& mem : mec.members) {
            const auto* b = mem.arc(a.left, a.mid, a.right);
            if (b == nullptr || b->state != a.state) {
                in_all = false;
                break;
            }
        }
        if (in_all) arcs.push_back(a);
    }
    return ClusterCpdag(d, std::move(directed), std::move(undirected), std::move(arcs));
}

// Clusters reachable from q when undirected edges are traversed away from the
// frontier; a superset of the descendant set in every MEC member.
inline std::vector<int> possible_descendants(const ClusterCpdag& g, int q) {
    if (q < 0 || q >= g.cluster_count())
        throw std::invalid_argument("possible_descendants: unknown cluster");
    std::vector<char> vis(g.cluster_count(), 0);
    std::vector<int> stack{q}, out;
    vis[q] = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        auto push = [&](int c) {
            if (!vis[c]) {
                vis[c] = 1;
                stack.push_back(c);
                out.push_back(c);
            }
        };
        for (int c : g.children(u)) push(c);
        for (int c : g.siblings(u)) push(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Cluster-level faithfulness of a ground-truth construction: every
// variable-level separation between cluster unions is reproduced by the
// cluster d-separation rules. Singleton pairs with all conditioning subsets.
inline bool is_cluster_faithful(const VariableDag& dag, const ClusterPartition& part,
                                const ClusterDag& cd) {
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
                bool var_sep =
                    dsep_variables(dag, part.cluster(i), part.cluster(j), part.variables_of(z));
                if (var_sep && !dsep_clusters(cd, {i}, {j}, z)) return false;
            }
        }
    return true;
}

/// Clusters reachable from a via directed edges only.
inline std::vector<int> definite_descendants(const ClusterCpdag& g, int a) {
    if (a < 0 || a >= g.cluster_count())
        throw std::invalid_argument("definite_descendants: unknown cluster");
    std::vector<char> vis(g.cluster_count(), 0);
    std::vector<int> stack{a}, out;
    vis[a] = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int c : g.children(u))
            if (!vis[c]) {
                vis[c] = 1;
                stack.push_back(c);
                out.push_back(c);
            }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace cifair
