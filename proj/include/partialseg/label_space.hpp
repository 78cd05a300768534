#pragma once

#include <string>
#include <vector>

#include "partialseg/errors.hpp"
#include "partialseg/grid.hpp"

namespace partialseg {

// Global label set: N distinct class names, index 0 is background.
// Immutable after construction.
class LabelSpace {
public:
    explicit LabelSpace(std::vector<std::string> names);

    int num_classes() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(int n) const;
    int index_of(const std::string& name) const;  // -1 if absent
    bool valid_index(int n) const { return n >= 0 && n < num_classes(); }

private:
    std::vector<std::string> names_;
};

// Disjoint cover of [0, N) into M ordered groups. Group indices form the
// reduced label space a partially labeled dataset annotates in.
class MergePartition {
public:
    MergePartition(const LabelSpace& space, std::vector<std::vector<int>> groups);

    int parent_classes() const { return parent_classes_; }
    int num_groups() const { return static_cast<int>(groups_.size()); }
    const std::vector<std::vector<int>>& groups() const { return groups_; }
    const std::vector<int>& group(int m) const;

    // The unique m with n in group m.
    int group_of(int n) const;

    // Sole member of group m when it is a singleton, -1 otherwise.
    int singleton_member(int m) const;

    bool is_identity() const;

    // Content-derived space tag, e.g. "6:0.2.3|1|4.5". Equal partitions get
    // equal ids, so masks and probability maps can carry it as their space.
    const std::string& id() const { return id_; }

    bool operator==(const MergePartition& other) const { return id_ == other.id_; }

private:
    int parent_classes_ = 0;
    std::vector<std::vector<int>> groups_;
    std::vector<int> group_of_;
    std::string id_;
};

// Per-class exclusion subsets E_n (classes mutually exclusive with n).
class ExclusionMap {
public:
    ExclusionMap(const LabelSpace& space, std::vector<std::vector<int>> excluded);

    // Strictest instantiation: E_n = all classes except n, background included.
    static ExclusionMap full_mutual(const LabelSpace& space);
    // E_n empty for every class; disables exclusion losses.
    static ExclusionMap none(const LabelSpace& space);

    int num_classes() const { return static_cast<int>(excluded_.size()); }
    const std::vector<int>& excluded(int n) const;

private:
    std::vector<std::vector<int>> excluded_;
};

// One-hot indicator over a label space of `size` classes.
class OneHot {
public:
    OneHot(int index, int size);

    int index() const { return index_; }
    int size() const { return size_; }
    std::vector<double> vector() const;

private:
    int index_ = 0;
    int size_ = 0;
};

// Elementwise sum of one-hot vectors over an exclusion subset. Entries are
// non-negative integers; with pairwise-distinct members they are 0/1.
class ExclusionVector {
public:
    explicit ExclusionVector(std::vector<int> counts);

    int size() const { return static_cast<int>(counts_.size()); }
    const std::vector<int>& counts() const { return counts_; }
    std::vector<double> vector() const;

private:
    std::vector<int> counts_;
};

// Degenerate partition with M = N singleton groups. Marginal losses under it
// must coincide with the regular losses.
MergePartition identity_partition(const LabelSpace& space);

// Partition for a dataset annotating only `kept` foreground classes: one
// singleton group per kept class, plus a merged background group holding the
// true background and every unlabeled organ. The background group comes first.
MergePartition single_organ_partition(const LabelSpace& space, const std::vector<int>& kept);

ExclusionVector exclusion_vector(const ExclusionMap& map, int n);

// Replace every global label n by the index of the group containing it.
LabelMask project_labels(const LabelMask& mask, const MergePartition& partition);

}  // namespace partialseg
