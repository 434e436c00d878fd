#include "dsloc/descriptor_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

namespace dsloc {

namespace {

double squared_distance(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

bool neighbor_order(const std::pair<double, const LocalDescriptor*>& a,
                    const std::pair<double, const LocalDescriptor*>& b) {
    if (a.first != b.first) return a.first < b.first;
    if (a.second->parent_image != b.second->parent_image)
        return a.second->parent_image < b.second->parent_image;
    return a.second->feature_id < b.second->feature_id;
}

constexpr std::uint32_t kIndexMagic = 0x58444C44;  // "DLDX"
constexpr std::uint32_t kIndexVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("descriptor index file truncated");
    return value;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("descriptor index file truncated");
    return s;
}

}  // namespace

double descriptor_distance(const LocalDescriptor& a, const LocalDescriptor& b) {
    if (a.values.size() != b.values.size())
        throw ContractViolation("descriptor_distance: dimension mismatch");
    return std::sqrt(squared_distance(a.values, b.values));
}

void SelectionConfig::validate() const {
    if (!(theta > 0.0 && theta < 1.0)) throw ContractViolation("SelectionConfig: theta must be in (0, 1)");
    if (!(beta > 0.0 && beta < 1.0)) throw ContractViolation("SelectionConfig: beta must be in (0, 1)");
    if (max_pool < 2) throw ContractViolation("SelectionConfig: max_pool must be >= 2");
}

DescriptorIndex DescriptorIndex::build(std::vector<LocalDescriptor> references,
                                       const IndexConfig& config) {
    if (references.empty()) throw ContractViolation("DescriptorIndex: empty reference set");
    DescriptorIndex index;
    index.dim_ = static_cast<int>(references.front().values.size());
    for (const auto& r : references) {
        if (static_cast<int>(r.values.size()) != index.dim_)
            throw ContractViolation("DescriptorIndex: descriptor dimension mismatch");
        for (float v : r.values)
            if (!std::isfinite(v)) throw ContractViolation("DescriptorIndex: non-finite descriptor");
    }
    index.references_ = std::move(references);
    index.config_ = config;
    if (config.backend == IndexConfig::Backend::KMeansTree) index.build_tree();
    return index;
}

void DescriptorIndex::build_tree() {
    std::vector<int> ids(references_.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::uint64_t rng_state = config_.seed * 0x9e3779b97f4a7c15ULL + 1;
    root_ = build_node(std::move(ids), 0, rng_state);
}

namespace {
// splitmix64; enough randomness for seeding k-means centers.
std::uint64_t next_random(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace

std::unique_ptr<DescriptorIndex::TreeNode> DescriptorIndex::build_node(std::vector<int> ids,
                                                                       int depth,
                                                                       std::uint64_t& rng_state) {
    auto node = std::make_unique<TreeNode>();
    node->center.assign(dim_, 0.0f);
    {
        std::vector<double> acc(dim_, 0.0);
        for (int id : ids)
            for (int d = 0; d < dim_; ++d) acc[d] += references_[id].values[d];
        for (int d = 0; d < dim_; ++d) node->center[d] = static_cast<float>(acc[d] / ids.size());
    }

    if (static_cast<int>(ids.size()) <= config_.max_leaf_size || depth > 24) {
        node->points = std::move(ids);
        return node;
    }

    const int k = std::min<int>(config_.branching, static_cast<int>(ids.size()));
    // Seeded center sampling; Lloyd iterations refine from there.
    std::vector<int> order = ids;
    for (size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[next_random(rng_state) % (i + 1)]);
    std::vector<std::vector<double>> centers(k, std::vector<double>(dim_));
    for (int c = 0; c < k; ++c)
        for (int d = 0; d < dim_; ++d) centers[c][d] = references_[order[c]].values[d];

    std::vector<int> assignment(ids.size(), 0);
    for (int iter = 0; iter < config_.kmeans_iterations; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < ids.size(); ++i) {
            const auto& v = references_[ids[i]].values;
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double acc = 0.0;
                for (int d = 0; d < dim_; ++d) {
                    const double diff = v[d] - centers[c][d];
                    acc += diff * diff;
                }
                if (acc < best_d) {
                    best_d = acc;
                    best = c;
                }
            }
            if (assignment[i] != best) {
                assignment[i] = best;
                changed = true;
            }
        }
        std::vector<int> counts(k, 0);
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim_, 0.0));
        for (size_t i = 0; i < ids.size(); ++i) {
            counts[assignment[i]] += 1;
            const auto& v = references_[ids[i]].values;
            for (int d = 0; d < dim_; ++d) sums[assignment[i]][d] += v[d];
        }
        for (int c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (int d = 0; d < dim_; ++d) centers[c][d] = sums[c][d] / counts[c];
        if (!changed) break;
    }

    std::vector<std::vector<int>> partitions(k);
    for (size_t i = 0; i < ids.size(); ++i) partitions[assignment[i]].push_back(ids[i]);
    int nonempty = 0;
    for (const auto& p : partitions)
        if (!p.empty()) ++nonempty;
    if (nonempty < 2) {
        // Degenerate data (e.g. all duplicates); keep a flat leaf.
        node->points = std::move(ids);
        return node;
    }
    for (auto& p : partitions)
        if (!p.empty()) node->children.push_back(build_node(std::move(p), depth + 1, rng_state));
    return node;
}

std::vector<std::pair<double, int>> DescriptorIndex::search_tree(const LocalDescriptor& query,
                                                                 int m) const {
    using Entry = std::pair<double, const TreeNode*>;
    const auto cmp = [](const Entry& a, const Entry& b) { return a.first > b.first; };
    std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> frontier(cmp);
    frontier.push({0.0, root_.get()});

    std::vector<std::pair<double, int>> candidates;
    int examined = 0;
    while (!frontier.empty() && (examined < config_.checks || static_cast<int>(candidates.size()) < m)) {
        const TreeNode* node = frontier.top().second;
        frontier.pop();
        if (node->children.empty()) {
            for (int id : node->points) {
                candidates.emplace_back(squared_distance(query.values, references_[id].values), id);
                ++examined;
            }
        } else {
            for (const auto& child : node->children) {
                double acc = 0.0;
                for (int d = 0; d < dim_; ++d) {
                    const double diff = query.values[d] - child->center[d];
                    acc += diff * diff;
                }
                frontier.push({acc, child.get()});
            }
        }
    }
    return candidates;
}

NeighborList DescriptorIndex::knn(const LocalDescriptor& query, int m, int query_feature_id) const {
    if (m < 1) throw ContractViolation("knn: m must be >= 1");
    if (static_cast<int>(query.values.size()) != dim_)
        throw ContractViolation("knn: query dimension mismatch");

    std::vector<std::pair<double, const LocalDescriptor*>> scored;
    if (config_.backend == IndexConfig::Backend::Exact || root_ == nullptr) {
        scored.reserve(references_.size());
        for (const auto& r : references_)
            scored.emplace_back(squared_distance(query.values, r.values), &r);
    } else {
        for (const auto& [d2, id] : search_tree(query, m)) scored.emplace_back(d2, &references_[id]);
    }

    const size_t take = std::min<size_t>(m, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), neighbor_order);

    NeighborList out;
    out.query_feature = query_feature_id;
    out.neighbors.reserve(take);
    for (size_t i = 0; i < take; ++i)
        out.neighbors.push_back({*scored[i].second, std::sqrt(scored[i].first)});
    return out;
}

void DescriptorIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open index file for writing: " + path);
    write_pod(out, kIndexMagic);
    write_pod(out, kIndexVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(config_.backend));
    write_pod<std::int32_t>(out, config_.branching);
    write_pod<std::int32_t>(out, config_.max_leaf_size);
    write_pod<std::int32_t>(out, config_.kmeans_iterations);
    write_pod<std::int32_t>(out, config_.checks);
    write_pod<std::uint64_t>(out, config_.seed);
    write_pod<std::int32_t>(out, dim_);
    write_pod<std::uint64_t>(out, references_.size());
    for (const auto& r : references_) {
        write_string(out, r.parent_image);
        write_pod<std::int32_t>(out, r.feature_id);
        out.write(reinterpret_cast<const char*>(r.values.data()),
                  static_cast<std::streamsize>(r.values.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("failed writing index file: " + path);
}

DescriptorIndex DescriptorIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open index file: " + path);
    if (read_pod<std::uint32_t>(in) != kIndexMagic)
        throw std::runtime_error("not a descriptor index file: " + path);
    if (read_pod<std::uint32_t>(in) != kIndexVersion)
        throw std::runtime_error("unsupported index version in " + path);
    IndexConfig config;
    config.backend = static_cast<IndexConfig::Backend>(read_pod<std::uint32_t>(in));
    config.branching = read_pod<std::int32_t>(in);
    config.max_leaf_size = read_pod<std::int32_t>(in);
    config.kmeans_iterations = read_pod<std::int32_t>(in);
    config.checks = read_pod<std::int32_t>(in);
    config.seed = read_pod<std::uint64_t>(in);
    const int dim = read_pod<std::int32_t>(in);
    const auto count = read_pod<std::uint64_t>(in);
    std::vector<LocalDescriptor> refs;
    refs.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        LocalDescriptor d;
        d.parent_image = read_string(in);
        d.feature_id = read_pod<std::int32_t>(in);
        d.values.resize(dim);
        in.read(reinterpret_cast<char*>(d.values.data()),
                static_cast<std::streamsize>(dim * sizeof(float)));
        if (!in) throw std::runtime_error("descriptor index file truncated");
        refs.push_back(std::move(d));
    }
    return build(std::move(refs), config);
}

std::vector<NeighborEntry> dynamic_nn_select(const NeighborList& nn, double theta) {
    if (nn.neighbors.empty()) throw ContractViolation("dynamic_nn_select: empty neighbor list");
    const auto& list = nn.neighbors;
    std::vector<NeighborEntry> selected{list[0]};
    const int count = static_cast<int>(list.size());
    int m = 1;
    while (m < count - 1) {
        const double num = list[m - 1].distance;
        const double den = list[m].distance;
        const double ratio = (num == 0.0 && den == 0.0) ? 1.0 : (den == 0.0 ? 1.0 : num / den);
        if (ratio > theta) {
            selected.push_back(list[m]);
            ++m;
        } else {
            break;
        }
    }
    return selected;
}

PruneDecision prune_query_feature(const NeighborList& nn, double beta) {
    PruneDecision decision;
    if (nn.neighbors.size() < 2) {
        decision.keep = true;
        decision.degenerate = true;
        return decision;
    }
    const double first = nn.neighbors.front().distance;
    const double last = nn.neighbors.back().distance;
    decision.ratio = (first == 0.0 && last == 0.0) ? 1.0 : first / last;
    decision.keep = !(decision.ratio > beta);
    return decision;
}

}  // namespace dsloc
