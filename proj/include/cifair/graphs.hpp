#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "cifair/errors.hpp"

namespace cifair {

enum class NodeKind { Continuous, Binary };

/// Directed acyclic graph over variable nodes. Immutable after construction.
class VariableDag {
public:
    VariableDag(int node_count, std::vector<std::pair<int, int>> edges,
                std::vector<NodeKind> kinds = {})
        : node_count_(node_count), edges_(std::move(edges)), kinds_(std::move(kinds)) {
        if (node_count_ < 0) throw std::invalid_argument("VariableDag: negative node count");
        if (kinds_.empty()) kinds_.assign(node_count_, NodeKind::Continuous);
        if (static_cast<int>(kinds_.size()) != node_count_)
            throw std::invalid_argument("VariableDag: kinds size mismatch");
        parents_.assign(node_count_, {});
        children_.assign(node_count_, {});
        std::set<std::pair<int, int>> seen;
        for (auto [p, c] : edges_) {
            if (p < 0 || p >= node_count_ || c < 0 || c >= node_count_)
                throw std::invalid_argument("VariableDag: edge endpoint out of range");
            if (p == c) throw std::invalid_argument("VariableDag: self-loop");
            if (!seen.insert({p, c}).second)
                throw std::invalid_argument("VariableDag: duplicate edge");
            children_[p].push_back(c);
            parents_[c].push_back(p);
        }
        for (auto& v : parents_) std::sort(v.begin(), v.end());
        for (auto& v : children_) std::sort(v.begin(), v.end());
        if (!topological_order_ok()) throw std::invalid_argument("VariableDag: cycle detected");
    }

    int node_count() const { return node_count_; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<int>& parents(int v) const { return parents_.at(v); }
    const std::vector<int>& children(int v) const { return children_.at(v); }
    NodeKind kind(int v) const { return kinds_.at(v); }
    const std::vector<NodeKind>& kinds() const { return kinds_; }

    bool has_edge(int p, int c) const {
        const auto& ch = children_.at(p);
        return std::binary_search(ch.begin(), ch.end(), c);
    }

    bool adjacent(int u, int v) const { return has_edge(u, v) || has_edge(v, u); }

    // Topological order (stable: lowest id first among ready nodes).
    std::vector<int> topological_order() const {
        std::vector<int> indeg(node_count_, 0), order;
        for (int v = 0; v < node_count_; ++v) indeg[v] = static_cast<int>(parents_[v].size());
        std::set<int> ready;
        for (int v = 0; v < node_count_; ++v)
            if (indeg[v] == 0) ready.insert(v);
        while (!ready.empty()) {
            int v = *ready.begin();
            ready.erase(ready.begin());
            order.push_back(v);
            for (int c : children_[v])
                if (--indeg[c] == 0) ready.insert(c);
        }
        return order;
    }

    // v plus everything reachable from v via directed edges.
    std::vector<int> descendants_and_self(int v) const {
        std::vector<char> vis(node_count_, 0);
        std::vector<int> stack{v}, out;
        vis[v] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            out.push_back(u);
            for (int c : children_[u])
                if (!vis[c]) {
                    vis[c] = 1;
                    stack.push_back(c);
                }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    bool topological_order_ok() const {
        return static_cast<int>(topological_order().size()) == node_count_;
    }

    int node_count_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<NodeKind> kinds_;
    std::vector<std::vector<int>> parents_, children_;
};

// Variable-level d-separation via the reachable-trail search. A collider on a
// trail is passable iff it or one of its descendants is conditioned on.
inline bool dsep_variables(const VariableDag& dag, const std::vector<int>& x,
                           const std::vector<int>& y, const std::vector<int>& z) {
    const int n = dag.node_count();
    std::vector<char> in_x(n, 0), in_y(n, 0), in_z(n, 0);
    auto mark = [&](const std::vector<int>& s, std::vector<char>& f, const char* name) {
        for (int v : s) {
            if (v < 0 || v >= n) throw std::invalid_argument(std::string("dsep: bad id in ") + name);
            f[v] = 1;
        }
    };
    mark(x, in_x, "x");
    mark(y, in_y, "y");
    mark(z, in_z, "z");
    for (int v = 0; v < n; ++v)
        if (in_x[v] + in_y[v] + in_z[v] > 1)
            throw std::invalid_argument("dsep: x, y, z must be pairwise disjoint");
    if (x.empty() || y.empty()) return true;

    // Ancestors of z (including z itself): nodes whose conditioning opens colliders.
    std::vector<char> anc_z(n, 0);
    {
        std::vector<int> stack;
        for (int v = 0; v < n; ++v)
            if (in_z[v]) {
                anc_z[v] = 1;
                stack.push_back(v);
            }
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int p : dag.parents(v))
                if (!anc_z[p]) {
                    anc_z[p] = 1;
                    stack.push_back(p);
                }
        }
    }

    // State (v, dir): dir=0 trail entered v from a child (moving up),
    // dir=1 entered from a parent (moving down).
    std::vector<char> visited(2 * n, 0);
    std::vector<std::pair<int, int>> stack;
    for (int v : x) {
        stack.push_back({v, 0});
        visited[2 * v] = 1;
    }
    auto push = [&](int v, int dir) {
        if (!visited[2 * v + dir]) {
            visited[2 * v + dir] = 1;
            stack.push_back({v, dir});
        }
    };
    while (!stack.empty()) {
        auto [v, dir] = stack.back();
        stack.pop_back();
        if (in_y[v]) return false;
        if (dir == 0) {
            if (!in_z[v]) {
                for (int p : dag.parents(v)) push(p, 0);
                for (int c : dag.children(v)) push(c, 1);
            }
        } else {
            if (!in_z[v])
                for (int c : dag.children(v)) push(c, 1);
            if (anc_z[v])
                for (int p : dag.parents(v)) push(p, 0);
        }
    }
    return true;
}

enum class Role { Plain, Sensitive, Admissible, Target };

/// Disjoint, nonempty variable clusters with per-cluster roles.
class ClusterPartition {
public:
    ClusterPartition(std::vector<std::vector<int>> clusters, std::vector<Role> roles = {})
        : clusters_(std::move(clusters)), roles_(std::move(roles)) {
        if (roles_.empty()) roles_.assign(clusters_.size(), Role::Plain);
        if (roles_.size() != clusters_.size())
            throw std::invalid_argument("ClusterPartition: roles size mismatch");
        int sensitive = 0, admissible = 0, target = 0;
        for (Role r : roles_) {
            sensitive += r == Role::Sensitive;
            admissible += r == Role::Admissible;
            target += r == Role::Target;
        }
        if (sensitive > 1) throw std::invalid_argument("ClusterPartition: multiple sensitive clusters");
        if (admissible > 1) throw std::invalid_argument("ClusterPartition: multiple admissible clusters");
        if (target > 1) throw std::invalid_argument("ClusterPartition: multiple target clusters");
        std::set<int> seen;
        for (auto& c : clusters_) {
            if (c.empty()) throw std::invalid_argument("ClusterPartition: empty cluster");
            std::sort(c.begin(), c.end());
            for (int v : c)
                if (!seen.insert(v).second)
                    throw std::invalid_argument("ClusterPartition: clusters not disjoint");
        }
    }

    int cluster_count() const { return static_cast<int>(clusters_.size()); }
    const std::vector<int>& cluster(int i) const { return clusters_.at(i); }
    const std::vector<std::vector<int>>& clusters() const { return clusters_; }
    Role role(int i) const { return roles_.at(i); }
    const std::vector<Role>& roles() const { return roles_; }

    int variable_count() const {
        int n = 0;
        for (auto& c : clusters_) n += static_cast<int>(c.size());
        return n;
    }

    std::optional<int> find_role(Role r) const {
        for (int i = 0; i < cluster_count(); ++i)
            if (roles_[i] == r) return i;
        return std::nullopt;
    }

    int sensitive_cluster() const {
        auto s = find_role(Role::Sensitive);
        if (!s) throw std::invalid_argument("ClusterPartition: no sensitive cluster designated");
        return *s;
    }

    // cluster id of each variable; throws if some variable is uncovered.
    std::vector<int> cluster_of_variables(int node_count) const {
        std::vector<int> of(node_count, -1);
        for (int i = 0; i < cluster_count(); ++i)
            for (int v : clusters_[i]) {
                if (v < 0 || v >= node_count)
                    throw std::invalid_argument("ClusterPartition: variable id out of range");
                of[v] = i;
            }
        for (int v = 0; v < node_count; ++v)
            if (of[v] < 0) throw std::invalid_argument("ClusterPartition: variable not covered");
        return of;
    }

    std::vector<int> variables_of(const std::vector<int>& cluster_ids) const {
        std::vector<int> out;
        for (int c : cluster_ids)
            out.insert(out.end(), clusters_.at(c).begin(), clusters_.at(c).end());
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::vector<std::vector<int>> clusters_;
    std::vector<Role> roles_;
};

enum class ArcState { Marg, Cond, Never };

/// Per-triplet independence annotation with its exception marks.
struct IndependenceArc {
    int left = -1, mid = -1, right = -1;  // canonical: left < right
    ArcState state = ArcState::Marg;
    std::vector<int> conn_marks;  // clusters whose conditioning re-connects the triplet
    std::vector<int> sep_marks;   // clusters whose presence on a path separates it
};

/// Cluster-level DAG with independence arcs. Immutable after construction.
class ClusterDag {
public:
    ClusterDag(int cluster_count, std::vector<std::pair<int, int>> edges,
               std::vector<IndependenceArc> arcs)
        : cluster_count_(cluster_count), edges_(std::move(edges)), arcs_(std::move(arcs)) {
        std::sort(edges_.begin(), edges_.end());
        children_.assign(cluster_count_, {});
        parents_.assign(cluster_count_, {});
        neighbors_.assign(cluster_count_, {});
        for (auto [p, c] : edges_) {
            if (p < 0 || p >= cluster_count_ || c < 0 || c >= cluster_count_)
                throw std::invalid_argument("ClusterDag: edge endpoint out of range");
            children_[p].push_back(c);
            parents_[c].push_back(p);
            neighbors_[p].push_back(c);
            neighbors_[c].push_back(p);
        }
        for (auto& v : neighbors_) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
        for (auto& v : parents_) std::sort(v.begin(), v.end());
        for (auto& v : children_) std::sort(v.begin(), v.end());
        if (!acyclic()) throw std::invalid_argument("ClusterDag: cycle detected");
        for (std::size_t idx = 0; idx < arcs_.size(); ++idx) {
            auto& a = arcs_[idx];
            if (a.left > a.right) {
                std::swap(a.left, a.right);
            }
            for (int c : {a.left, a.mid, a.right})
                if (c < 0 || c >= cluster_count_)
                    throw std::invalid_argument("ClusterDag: arc references unknown cluster");
            arc_index_[key(a.left, a.mid, a.right)] = idx;
        }
    }

    int cluster_count() const { return cluster_count_; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<IndependenceArc>& arcs() const { return arcs_; }
    const std::vector<int>& parents(int c) const { return parents_.at(c); }
    const std::vector<int>& children(int c) const { return children_.at(c); }
    const std::vector<int>& neighbors(int c) const { return neighbors_.at(c); }

    bool has_edge(int p, int c) const {
        return std::binary_search(children_.at(p).begin(), children_.at(p).end(), c);
    }
    bool adjacent(int u, int v) const {
        return std::binary_search(neighbors_.at(u).begin(), neighbors_.at(u).end(), v);
    }

    const IndependenceArc* arc(int i, int k, int j) const {
        auto it = arc_index_.find(key(std::min(i, j), k, std::max(i, j)));
        return it == arc_index_.end() ? nullptr : &arcs_[it->second];
    }

    std::vector<int> descendants(int c) const {
        std::vector<char> vis(cluster_count_, 0);
        std::vector<int> stack{c}, out;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int ch : children_[u])
                if (!vis[ch]) {
                    vis[ch] = 1;
                    stack.push_back(ch);
                    out.push_back(ch);
                }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    static std::uint64_t key(int a, int k, int b) {
        return (static_cast<std::uint64_t>(a) << 40) | (static_cast<std::uint64_t>(k) << 20) |
               static_cast<std::uint64_t>(b);
    }
    bool acyclic() const {
        std::vector<int> indeg(cluster_count_, 0);
        for (auto [p, c] : edges_) {
            (void)p;
            indeg[c]++;
        }
        std::vector<int> stack;
        int seen = 0;
        for (int v = 0; v < cluster_count_; ++v)
            if (indeg[v] == 0) stack.push_back(v);
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            ++seen;
            for (int c : children_[v])
                if (--indeg[c] == 0) stack.push_back(c);
        }
        return seen == cluster_count_;
    }

    int cluster_count_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<IndependenceArc> arcs_;
    std::vector<std::vector<int>> children_, parents_, neighbors_;
    std::map<std::uint64_t, std::size_t> arc_index_;
};

/// Cluster edge i->j present iff some variable edge crosses i->j.
inline std::vector<std::pair<int, int>> project_clusters(const VariableDag& dag,
                                                         const ClusterPartition& partition) {
    auto of = partition.cluster_of_variables(dag.node_count());
    std::set<std::pair<int, int>> out;
    for (auto [p, c] : dag.edges()) {
        int cp = of[p], cc = of[c];
        if (cp != cc) out.insert({cp, cc});
    }
    return {out.begin(), out.end()};
}

inline bool is_admissible(const VariableDag& dag, const ClusterPartition& partition) {
    auto edges = project_clusters(dag, partition);
    int d = partition.cluster_count();
    std::vector<std::vector<int>> ch(d);
    std::vector<int> indeg(d, 0);
    for (auto [p, c] : edges) {
        ch[p].push_back(c);
        indeg[c]++;
    }
    std::vector<int> stack;
    for (int v = 0; v < d; ++v)
        if (indeg[v] == 0) stack.push_back(v);
    int seen = 0;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        ++seen;
        for (int c : ch[v])
            if (--indeg[c] == 0) stack.push_back(c);
    }
    return seen == d;
}

namespace detail {

// Subsets of `pool` ordered smallest-first, lexicographic within a size.
// Visitor returns true to stop.
template <typename F>
bool for_each_subset_smallest_first(const std::vector<int>& pool, F&& visit) {
    const int n = static_cast<int>(pool.size());
    std::vector<int> subset;
    for (int k = 0; k <= n; ++k) {
        std::vector<int> idx(k);
        for (int i = 0; i < k; ++i) idx[i] = i;
        while (true) {
            subset.clear();
            for (int i : idx) subset.push_back(pool[i]);
            if (visit(subset)) return true;
            int i = k - 1;
            while (i >= 0 && idx[i] == n - k + i) --i;
            if (i < 0) break;
            ++idx[i];
            for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
        if (k == 0 && n == 0) break;
    }
    return false;
}

// Variable DAG with all edges between two clusters removed; used for arcs of
// shielded (manipulated unshielded) triplets.
inline VariableDag drop_cross_edges(const VariableDag& dag, const std::vector<int>& of, int ci,
                                    int cj) {
    std::vector<std::pair<int, int>> kept;
    for (auto [p, c] : dag.edges()) {
        bool cross = (of[p] == ci && of[c] == cj) || (of[p] == cj && of[c] == ci);
        if (!cross) kept.push_back({p, c});
    }
    return VariableDag(dag.node_count(), std::move(kept), dag.kinds());
}

}  // namespace detail

// Independence arc state for triplet <ci, ck, cj>. The separating-set search
// runs smallest-first with lexicographic tie-break so the fixed S of the
// definition is deterministic. Returns nullopt when no separating set exists.
inline std::optional<ArcState> compute_arc_state(const VariableDag& dag,
                                                 const ClusterPartition& partition, int ci, int ck,
                                                 int cj) {
    if (ci == ck || ck == cj || ci == cj)
        throw std::invalid_argument("compute_arc_state: triplet clusters must be distinct");
    auto of = partition.cluster_of_variables(dag.node_count());

    bool shielded = false;
    for (auto [p, c] : dag.edges()) {
        if ((of[p] == ci && of[c] == cj) || (of[p] == cj && of[c] == ci)) {
            shielded = true;
            break;
        }
    }
    const VariableDag* work = &dag;
    std::optional<VariableDag> manipulated;
    if (shielded) {
        manipulated = detail::drop_cross_edges(dag, of, ci, cj);
        work = &*manipulated;
    }

    std::vector<int> pool;
    for (int c = 0; c < partition.cluster_count(); ++c)
        if (c != ci && c != cj) pool.push_back(c);

    const auto& vi = partition.cluster(ci);
    const auto& vj = partition.cluster(cj);
    std::optional<std::vector<int>> sep;
    detail::for_each_subset_smallest_first(pool, [&](const std::vector<int>& s) {
        if (dsep_variables(*work, vi, vj, partition.variables_of(s))) {
            sep = s;
            return true;
        }
        return false;
    });
    if (!sep) return std::nullopt;

    if (std::find(sep->begin(), sep->end(), ck) != sep->end()) return ArcState::Marg;
    std::vector<int> with_k = *sep;
    with_k.push_back(ck);
    std::sort(with_k.begin(), with_k.end());
    if (!dsep_variables(*work, vi, vj, partition.variables_of(with_k))) return ArcState::Cond;
    return ArcState::Never;
}

// A variable path is analogous to a cluster path iff its variables stay inside
// the path clusters, every path cluster is visited, and the cluster positions
// along the variable path never step backwards.
inline bool is_analogous(const std::vector<int>& variable_path, const std::vector<int>& cluster_path,
                         const ClusterPartition& partition, const VariableDag& dag) {
    if (variable_path.empty() || cluster_path.empty())
        throw std::invalid_argument("is_analogous: paths must be nonempty");
    auto of = partition.cluster_of_variables(dag.node_count());
    std::map<int, int> pos;
    for (int i = 0; i < static_cast<int>(cluster_path.size()); ++i)
        if (!pos.emplace(cluster_path[i], i).second)
            throw std::invalid_argument("is_analogous: cluster path revisits a cluster");
    std::vector<char> covered(cluster_path.size(), 0);
    int last = -1;
    for (int v : variable_path) {
        auto it = pos.find(of.at(v));
        if (it == pos.end()) return false;
        if (it->second < last) return false;
        last = it->second;
        covered[it->second] = 1;
    }
    return std::find(covered.begin(), covered.end(), 0) == covered.end();
}

namespace detail {

struct VarPathOracle {
    const VariableDag& dag;
    const std::vector<int>& of;             // variable -> cluster
    std::vector<std::vector<int>> desc_cl;  // variable -> clusters of {v} U desc(v)

    explicit VarPathOracle(const VariableDag& d, const std::vector<int>& cl_of)
        : dag(d), of(cl_of) {
        desc_cl.resize(dag.node_count());
        for (int v = 0; v < dag.node_count(); ++v) {
            std::set<int> cs;
            for (int u : dag.descendants_and_self(v)) cs.insert(of[u]);
            desc_cl[v] = {cs.begin(), cs.end()};
        }
    }

    // True iff some conditioning set of clusters W (disjoint from the cluster
    // path's endpoints) makes `path` d-connecting: W must dodge every interior
    // non-collider's cluster and still reach each interior collider or one of
    // its descendants.
    bool connectable(const std::vector<int>& path, int end_a_cluster, int end_b_cluster) const {
        std::set<int> avoid{end_a_cluster, end_b_cluster};
        std::vector<int> colliders;
        for (std::size_t i = 1; i + 1 < path.size(); ++i) {
            bool in_l = dag.has_edge(path[i - 1], path[i]);
            bool in_r = dag.has_edge(path[i + 1], path[i]);
            if (in_l && in_r)
                colliders.push_back(path[i]);
            else
                avoid.insert(of[path[i]]);
        }
        for (int v : colliders) {
            bool ok = false;
            for (int c : desc_cl[v])
                if (!avoid.count(c)) {
                    ok = true;
                    break;
                }
            if (!ok) return false;
        }
        return true;
    }

    // DFS over variable paths analogous to cluster_path; stops early once a
    // connectable one is found (when `find_connectable`), else visits all.
    template <typename F>
    void analogous_paths(const std::vector<int>& cluster_path, F&& visit) const {
        std::map<int, int> pos;
        for (int i = 0; i < static_cast<int>(cluster_path.size()); ++i)
            pos[cluster_path[i]] = i;
        const int n_pos = static_cast<int>(cluster_path.size());
        std::vector<int> path;
        std::vector<char> on_path(dag.node_count(), 0);
        bool stop = false;

        auto dfs = [&](auto&& self, int v, int p) -> void {
            if (stop) return;
            path.push_back(v);
            on_path[v] = 1;
            if (p == n_pos - 1) {
                if (visit(path)) stop = true;
            }
            if (!stop) {
                auto step = [&](int u) {
                    if (stop || on_path[u]) return;
                    auto it = pos.find(of[u]);
                    if (it == pos.end()) return;
                    // Positions may advance by at most covering order; they
                    // must be non-decreasing and cannot skip an uncovered slot.
                    if (it->second < p || it->second > p + 1) return;
                    self(self, u, it->second);
                };
                for (int u : dag.children(v)) step(u);
                for (int u : dag.parents(v)) step(u);
            }
            on_path[v] = 0;
            path.pop_back();
        };
        for (int v = 0; v < dag.node_count(); ++v) {
            if (of[v] == cluster_path[0]) dfs(dfs, v, 0);
            if (stop) break;
        }
    }

    bool has_connectable_analogous_path(const std::vector<int>& cluster_path) const {
        bool found = false;
        analogous_paths(cluster_path, [&](const std::vector<int>& path) {
            if (connectable(path, cluster_path.front(), cluster_path.back())) {
                found = true;
                return true;
            }
            return false;
        });
        return found;
    }
};

}  // namespace detail

// Annotates arcs with separation and connection marks. `cluster_edges` is the
// projection of dag under partition; `arcs` must already cover all
// (manipulated) unshielded triplets.
inline std::vector<IndependenceArc> compute_marks(const VariableDag& dag,
                                                  const ClusterPartition& partition,
                                                  const std::vector<std::pair<int, int>>& cluster_edges,
                                                  std::vector<IndependenceArc> arcs) {
    const int d = partition.cluster_count();
    auto of = partition.cluster_of_variables(dag.node_count());
    detail::VarPathOracle oracle(dag, of);

    std::vector<std::vector<int>> nbr(d), cl_children(d);
    for (auto [p, c] : cluster_edges) {
        nbr[p].push_back(c);
        nbr[c].push_back(p);
        cl_children[p].push_back(c);
    }
    for (auto& v : nbr) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    std::vector<std::vector<char>> cl_desc(d, std::vector<char>(d, 0));
    for (int c = 0; c < d; ++c) {
        std::vector<int> stack{c};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int ch : cl_children[u])
                if (!cl_desc[c][ch]) {
                    cl_desc[c][ch] = 1;
                    stack.push_back(ch);
                }
        }
    }

    std::map<std::tuple<int, int, int>, std::size_t> index;
    for (std::size_t i = 0; i < arcs.size(); ++i) {
        auto& a = arcs[i];
        if (a.left > a.right) std::swap(a.left, a.right);
        index[{a.left, a.mid, a.right}] = i;
    }
    auto find_arc = [&](int i, int k, int j) -> IndependenceArc* {
        auto it = index.find({std::min(i, j), k, std::max(i, j)});
        return it == index.end() ? nullptr : &arcs[it->second];
    };

    // Connection marks: a collider hidden inside the middle cluster of a
    // bridging path can be re-activated by conditioning on a cluster holding
    // one of its children. Marks already implied by the arc's own semantics
    // (descendant conditioning on a cond arc) are not recorded.
    for (auto& arc : arcs) {
        if (arc.state == ArcState::Marg) continue;
        std::set<int> marks;
        oracle.analogous_paths({arc.left, arc.mid, arc.right}, [&](const std::vector<int>& path) {
            for (std::size_t i = 1; i + 1 < path.size(); ++i) {
                int v = path[i];
                if (of[v] != arc.mid) continue;
                if (!dag.has_edge(path[i - 1], v) || !dag.has_edge(path[i + 1], v)) continue;
                for (int ch : dag.children(v)) {
                    int cd = of[ch];
                    if (cd == arc.left || cd == arc.mid || cd == arc.right) continue;
                    if (arc.state == ArcState::Cond && cl_desc[arc.mid][cd]) continue;
                    marks.insert(cd);
                }
            }
            return false;
        });
        arc.conn_marks.assign(marks.begin(), marks.end());
    }

    // Separation marks: a cluster path whose full span admits no d-connecting
    // analogous variable path, while both its prefix and suffix do, is marked
    // at its endpoints.
    std::vector<int> path;
    std::vector<char> on_path(d, 0);
    auto consider = [&](const std::vector<int>& p) {
        const int n = static_cast<int>(p.size());
        std::vector<IndependenceArc*> traj;
        for (int i = 0; i + 2 < n; ++i) {
            auto* a = find_arc(p[i], p[i + 1], p[i + 2]);
            if (a == nullptr || a->state == ArcState::Never) return;
            traj.push_back(a);
        }
        if (oracle.has_connectable_analogous_path(p)) return;
        std::vector<int> prefix(p.begin(), p.end() - 1), suffix(p.begin() + 1, p.end());
        if (!oracle.has_connectable_analogous_path(prefix)) return;
        if (!oracle.has_connectable_analogous_path(suffix)) return;
        auto add = [](IndependenceArc* a, int cluster) {
            if (std::find(a->sep_marks.begin(), a->sep_marks.end(), cluster) == a->sep_marks.end())
                a->sep_marks.push_back(cluster);
        };
        add(traj.back(), p.front());
        add(traj.front(), p.back());
    };
    auto dfs = [&](auto&& self, int v) -> void {
        path.push_back(v);
        on_path[v] = 1;
        if (path.size() >= 4 && path.front() < path.back()) consider(path);
        if (static_cast<int>(path.size()) < d)
            for (int u : nbr[v])
                if (!on_path[u]) self(self, u);
        on_path[v] = 0;
        path.pop_back();
    };
    for (int v = 0; v < d; ++v) dfs(dfs, v);

    for (auto& a : arcs) std::sort(a.sep_marks.begin(), a.sep_marks.end());
    return arcs;
}

/// Ground-truth cluster DAG with arcs and marks for an admissible partition.
inline ClusterDag build_cluster_dag(const VariableDag& dag, const ClusterPartition& partition) {
    if (!is_admissible(dag, partition))
        throw admissibility_error("build_cluster_dag: partition induces a directed cycle");
    auto edges = project_clusters(dag, partition);
    const int d = partition.cluster_count();
    std::vector<std::vector<char>> adj(d, std::vector<char>(d, 0));
    for (auto [p, c] : edges) adj[p][c] = adj[c][p] = 1;

    std::vector<IndependenceArc> arcs;
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) {
                if (i == k || j == k) continue;
                if (!adj[i][k] || !adj[k][j]) continue;
                auto state = compute_arc_state(dag, partition, i, k, j);
                if (!state) continue;
                IndependenceArc a;
                a.left = i;
                a.mid = k;
                a.right = j;
                a.state = *state;
                arcs.push_back(a);
            }
    arcs = compute_marks(dag, partition, edges, std::move(arcs));
    return ClusterDag(d, std::move(edges), std::move(arcs));
}

}  // namespace cifair
