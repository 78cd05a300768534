#include "partialseg/label_space.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace partialseg {

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() < 2)
        throw Error("LabelSpace needs at least background plus one class");
    std::set<std::string> seen(names_.begin(), names_.end());
    if (seen.size() != names_.size())
        throw Error("LabelSpace class names must be unique");
}

const std::string& LabelSpace::name(int n) const {
    if (!valid_index(n)) throw InvalidIndex("class index " + std::to_string(n) + " out of range");
    return names_[n];
}

int LabelSpace::index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

namespace {

std::string partition_id(int parent_classes, const std::vector<std::vector<int>>& groups) {
    std::ostringstream out;
    out << parent_classes << ":";
    for (std::size_t m = 0; m < groups.size(); ++m) {
        if (m) out << "|";
        for (std::size_t k = 0; k < groups[m].size(); ++k) {
            if (k) out << ".";
            out << groups[m][k];
        }
    }
    return out.str();
}

}  // namespace

MergePartition::MergePartition(const LabelSpace& space, std::vector<std::vector<int>> groups)
    : parent_classes_(space.num_classes()), groups_(std::move(groups)) {
    if (groups_.empty() || static_cast<int>(groups_.size()) > parent_classes_)
        throw Error("MergePartition needs between 1 and N groups");

    group_of_.assign(parent_classes_, -1);
    for (std::size_t m = 0; m < groups_.size(); ++m) {
        auto& members = groups_[m];
        if (members.empty()) throw Error("MergePartition groups must be non-empty");
        std::sort(members.begin(), members.end());
        for (int n : members) {
            if (n < 0 || n >= parent_classes_)
                throw InvalidIndex("partition member " + std::to_string(n) + " out of range");
            if (group_of_[n] != -1)
                throw Error("partition groups overlap at class " + std::to_string(n));
            group_of_[n] = static_cast<int>(m);
        }
    }
    for (int n = 0; n < parent_classes_; ++n)
        if (group_of_[n] == -1)
            throw Error("partition does not cover class " + std::to_string(n));

    id_ = partition_id(parent_classes_, groups_);
}

const std::vector<int>& MergePartition::group(int m) const {
    if (m < 0 || m >= num_groups()) throw InvalidIndex("group index out of range");
    return groups_[m];
}

int MergePartition::group_of(int n) const {
    if (n < 0 || n >= parent_classes_) throw InvalidIndex("class index out of range");
    return group_of_[n];
}

int MergePartition::singleton_member(int m) const {
    const auto& g = group(m);
    return g.size() == 1 ? g.front() : -1;
}

bool MergePartition::is_identity() const {
    if (num_groups() != parent_classes_) return false;
    for (int m = 0; m < num_groups(); ++m)
        if (groups_[m].size() != 1 || groups_[m][0] != m) return false;
    return true;
}

ExclusionMap::ExclusionMap(const LabelSpace& space, std::vector<std::vector<int>> excluded)
    : excluded_(std::move(excluded)) {
    const int n_classes = space.num_classes();
    if (static_cast<int>(excluded_.size()) != n_classes)
        throw Error("ExclusionMap needs one subset per class");
    for (int n = 0; n < n_classes; ++n) {
        auto& subset = excluded_[n];
        std::sort(subset.begin(), subset.end());
        for (int k : subset) {
            if (k < 0 || k >= n_classes)
                throw InvalidIndex("exclusion member " + std::to_string(k) + " out of range");
            if (k == n)
                throw Error("class " + std::to_string(n) + " cannot exclude itself");
        }
    }
}

ExclusionMap ExclusionMap::full_mutual(const LabelSpace& space) {
    std::vector<std::vector<int>> excluded(space.num_classes());
    for (int n = 0; n < space.num_classes(); ++n)
        for (int k = 0; k < space.num_classes(); ++k)
            if (k != n) excluded[n].push_back(k);
    return ExclusionMap(space, std::move(excluded));
}

ExclusionMap ExclusionMap::none(const LabelSpace& space) {
    return ExclusionMap(space, std::vector<std::vector<int>>(space.num_classes()));
}

const std::vector<int>& ExclusionMap::excluded(int n) const {
    if (n < 0 || n >= num_classes()) throw InvalidIndex("class index out of range");
    return excluded_[n];
}

OneHot::OneHot(int index, int size) : index_(index), size_(size) {
    if (size < 1 || index < 0 || index >= size)
        throw InvalidIndex("one-hot index out of range");
}

std::vector<double> OneHot::vector() const {
    std::vector<double> v(size_, 0.0);
    v[index_] = 1.0;
    return v;
}

ExclusionVector::ExclusionVector(std::vector<int> counts) : counts_(std::move(counts)) {
    for (int c : counts_)
        if (c < 0) throw Error("exclusion vector entries must be non-negative");
}

std::vector<double> ExclusionVector::vector() const {
    return {counts_.begin(), counts_.end()};
}

MergePartition identity_partition(const LabelSpace& space) {
    std::vector<std::vector<int>> groups;
    groups.reserve(space.num_classes());
    for (int n = 0; n < space.num_classes(); ++n) groups.push_back({n});
    return MergePartition(space, std::move(groups));
}

MergePartition single_organ_partition(const LabelSpace& space, const std::vector<int>& kept) {
    if (kept.empty()) throw EmptyKeptSet("kept class set must be non-empty");
    std::set<int> kept_set;
    for (int n : kept) {
        if (n <= 0 || n >= space.num_classes())
            throw InvalidIndex("kept class " + std::to_string(n) +
                               " must be a foreground index in [1, N)");
        kept_set.insert(n);
    }

    std::vector<std::vector<int>> groups;
    std::vector<int> background{0};
    for (int n = 1; n < space.num_classes(); ++n)
        if (!kept_set.count(n)) background.push_back(n);
    groups.push_back(std::move(background));
    for (int n : kept_set) groups.push_back({n});
    return MergePartition(space, std::move(groups));
}

ExclusionVector exclusion_vector(const ExclusionMap& map, int n) {
    std::vector<int> counts(map.num_classes(), 0);
    for (int k : map.excluded(n)) counts[k] += 1;
    return ExclusionVector(std::move(counts));
}

LabelMask project_labels(const LabelMask& mask, const MergePartition& partition) {
    if (!mask.global())
        throw SpaceMismatch("project_labels expects a mask in the global label space");
    if (mask.num_classes != partition.parent_classes())
        throw SpaceMismatch("mask class count does not match partition parent space");

    LabelMask out(mask.height, mask.width, partition.num_groups(), partition.id());
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        const int n = mask.labels[i];
        if (n < 0 || n >= partition.parent_classes())
            throw UnlabeledIndex("mask pixel label " + std::to_string(n) +
                                 " not covered by the partition");
        out.labels[i] = partition.group_of(n);
    }
    return out;
}

}  // namespace partialseg
