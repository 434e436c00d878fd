#include "dsloc/types.hpp"

#include <algorithm>
#include <cmath>

namespace dsloc {

AffinityMatrix::AffinityMatrix(int n) : n_(n), entries_(static_cast<size_t>(n) * n, 0.0) {
    if (n <= 0) throw ContractViolation("AffinityMatrix: size must be positive");
}

AffinityMatrix AffinityMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    const int n = static_cast<int>(rows.size());
    AffinityMatrix m(n);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows[i].size()) != n)
            throw ContractViolation("AffinityMatrix: ragged rows");
        for (int j = 0; j < n; ++j) {
            const double v = rows[i][j];
            if (!std::isfinite(v)) throw ContractViolation("AffinityMatrix: non-finite entry");
            if (v != rows[j][i]) throw ContractViolation("AffinityMatrix: not symmetric");
            if (i == j && v != 0.0) throw ContractViolation("AffinityMatrix: nonzero diagonal");
            if (v < 0.0) throw ContractViolation("AffinityMatrix: negative entry");
            m.entries_[static_cast<size_t>(i) * n + j] = v;
        }
    }
    return m;
}

void AffinityMatrix::set(int i, int j, double value) {
    if (i < 0 || j < 0 || i >= n_ || j >= n_)
        throw ContractViolation("AffinityMatrix::set: index out of range");
    if (i == j) {
        if (value != 0.0) throw ContractViolation("AffinityMatrix::set: diagonal must stay zero");
        return;
    }
    if (!(value >= 0.0) || !std::isfinite(value))
        throw ContractViolation("AffinityMatrix::set: entries must be finite and nonnegative");
    entries_[static_cast<size_t>(i) * n_ + j] = value;
    entries_[static_cast<size_t>(j) * n_ + i] = value;
}

PayoffMatrix::PayoffMatrix(int n) : n_(n), entries_(static_cast<size_t>(n) * n, 0.0) {
    if (n <= 0) throw ContractViolation("PayoffMatrix: size must be positive");
}

PayoffMatrix PayoffMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    const int n = static_cast<int>(rows.size());
    PayoffMatrix m(n);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows[i].size()) != n)
            throw ContractViolation("PayoffMatrix: ragged rows");
        for (int j = 0; j < n; ++j) {
            const double v = rows[i][j];
            if (!std::isfinite(v)) throw ContractViolation("PayoffMatrix: non-finite entry");
            if (v != rows[j][i]) throw ContractViolation("PayoffMatrix: not symmetric");
            m.entries_[static_cast<size_t>(i) * n + j] = v;
        }
    }
    return m;
}

PayoffMatrix PayoffMatrix::from_affinity(const AffinityMatrix& a) {
    PayoffMatrix m(a.size());
    m.entries_ = a.data();
    return m;
}

void PayoffMatrix::set(int i, int j, double value) {
    if (i < 0 || j < 0 || i >= n_ || j >= n_)
        throw ContractViolation("PayoffMatrix::set: index out of range");
    if (!std::isfinite(value)) throw ContractViolation("PayoffMatrix::set: non-finite entry");
    entries_[static_cast<size_t>(i) * n_ + j] = value;
    entries_[static_cast<size_t>(j) * n_ + i] = value;
}

void PayoffMatrix::add_diagonal(int i, double delta) {
    if (i < 0 || i >= n_) throw ContractViolation("PayoffMatrix::add_diagonal: index out of range");
    entries_[static_cast<size_t>(i) * n_ + i] += delta;
}

void PayoffMatrix::multiply(std::span<const double> x, std::span<double> y) const {
    if (static_cast<int>(x.size()) != n_ || static_cast<int>(y.size()) != n_)
        throw ContractViolation("PayoffMatrix::multiply: dimension mismatch");
    for (int i = 0; i < n_; ++i) {
        double acc = 0.0;
        const double* row = entries_.data() + static_cast<size_t>(i) * n_;
        for (int j = 0; j < n_; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

NodeSet::NodeSet(std::initializer_list<int> nodes) : NodeSet(std::vector<int>(nodes)) {}

NodeSet::NodeSet(std::vector<int> nodes) : members_(std::move(nodes)) {
    std::sort(members_.begin(), members_.end());
    const auto dup = std::adjacent_find(members_.begin(), members_.end());
    if (dup != members_.end()) throw ContractViolation("NodeSet: duplicate member");
    if (!members_.empty() && members_.front() < 0)
        throw ContractViolation("NodeSet: negative node index");
}

bool NodeSet::contains(int node) const {
    return std::binary_search(members_.begin(), members_.end(), node);
}

NodeSet NodeSet::with(int node) const {
    if (contains(node)) return *this;
    std::vector<int> m = members_;
    m.push_back(node);
    return NodeSet(std::move(m));
}

NodeSet NodeSet::without(int node) const {
    std::vector<int> m;
    m.reserve(members_.size());
    for (int v : members_)
        if (v != node) m.push_back(v);
    return NodeSet(std::move(m));
}

std::uint64_t NodeSet::mask() const {
    std::uint64_t mask = 0;
    for (int v : members_) {
        if (v >= 64) throw ContractViolation("NodeSet::mask: node index >= 64");
        mask |= std::uint64_t{1} << v;
    }
    return mask;
}

NodeSet NodeSet::from_mask(std::uint64_t mask) {
    std::vector<int> m;
    for (int i = 0; mask != 0; ++i, mask >>= 1)
        if (mask & 1) m.push_back(i);
    return NodeSet(std::move(m));
}

SimplexVector::SimplexVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ContractViolation("SimplexVector: empty");
    double sum = 0.0;
    for (double v : values_) {
        if (!(v >= 0.0)) throw ContractViolation("SimplexVector: negative component");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ContractViolation("SimplexVector: does not sum to 1");
}

SimplexVector SimplexVector::barycenter(int n) {
    if (n <= 0) throw ContractViolation("SimplexVector::barycenter: n must be positive");
    return SimplexVector(std::vector<double>(n, 1.0 / n));
}

SimplexVector SimplexVector::unit(int n, int index) {
    if (index < 0 || index >= n) throw ContractViolation("SimplexVector::unit: index out of range");
    std::vector<double> v(n, 0.0);
    v[index] = 1.0;
    return SimplexVector(std::move(v));
}

NodeSet support(const SimplexVector& x, double cutoff) { return support(std::span<const double>(x.values()), cutoff); }

NodeSet support(std::span<const double> x, double cutoff) {
    std::vector<int> members;
    for (int i = 0; i < static_cast<int>(x.size()); ++i)
        if (x[i] > cutoff) members.push_back(i);
    return NodeSet(std::move(members));
}

}  // namespace dsloc
