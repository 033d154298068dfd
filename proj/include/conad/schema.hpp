#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

#include "conad/common.hpp"

namespace conad {

/// Names and roles of the binary attributes of a dataset.
///
/// Attributes split into context attributes (the conditioning features) and a
/// single target attribute (the feature whose observed value gets scored).
/// Context indices and the target index are disjoint and together cover all
/// attributes; this is checked at construction.
class AttributeSchema {
 public:
  /// Context defaults to every attribute other than the target.
  AttributeSchema(std::vector<std::string> names, std::size_t target_index)
      : names_(std::move(names)), target_index_(target_index) {
    validate();
  }

  AttributeSchema(std::vector<std::string> names, std::vector<std::size_t> context_indices,
                  std::size_t target_index)
      : names_(std::move(names)),
        context_indices_(std::move(context_indices)),
        target_index_(target_index) {
    validate();
  }

  std::size_t size() const { return names_.size(); }
  std::size_t context_size() const { return context_indices_.size(); }
  const std::vector<std::string>& attribute_names() const { return names_; }
  const std::vector<std::size_t>& context_indices() const { return context_indices_; }
  std::size_t target_index() const { return target_index_; }
  const std::string& target_name() const { return names_[target_index_]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  bool operator==(const AttributeSchema& other) const {
    return names_ == other.names_ && context_indices_ == other.context_indices_ &&
           target_index_ == other.target_index_;
  }

 private:
  void validate() {
    if (names_.empty()) fail("schema: attribute list is empty");
    if (target_index_ >= names_.size())
      fail("schema: target index %zu out of range (d=%zu)", target_index_, names_.size());
    if (context_indices_.empty() && names_.size() > 1) {
      context_indices_.reserve(names_.size() - 1);
      for (std::size_t i = 0; i < names_.size(); ++i)
        if (i != target_index_) context_indices_.push_back(i);
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
      if (n.empty()) fail("schema: empty attribute name");
      if (!seen.insert(n).second) fail("schema: duplicate attribute name '%s'", n.c_str());
    }
    std::unordered_set<std::size_t> cover{target_index_};
    for (std::size_t i : context_indices_) {
      if (i >= names_.size()) fail("schema: context index %zu out of range", i);
      if (i == target_index_)
        fail("schema: attribute '%s' is both context and target", names_[i].c_str());
      if (!cover.insert(i).second)
        fail("schema: duplicate context index %zu", i);
    }
    if (cover.size() != names_.size())
      fail("schema: context plus target must cover all %zu attributes", names_.size());
  }

  std::vector<std::string> names_;
  std::vector<std::size_t> context_indices_;
  std::size_t target_index_ = 0;
};

/// One case: a length-d vector of 0/1 values stored as reals.
struct Instance {
  Eigen::VectorXd values;
};

struct Projection {
  Eigen::VectorXd context;  // entries in schema order
  double target = 0.0;      // 0 or 1
};

/// Split an instance into its context part and its target value.
inline Projection project(const Instance& instance, const AttributeSchema& schema) {
  if (static_cast<std::size_t>(instance.values.size()) != schema.size())
    fail("project: instance length %ld does not match schema size %zu",
         static_cast<long>(instance.values.size()), schema.size());
  Projection p;
  p.context.resize(static_cast<Eigen::Index>(schema.context_size()));
  Eigen::Index j = 0;
  for (std::size_t i : schema.context_indices())
    p.context[j++] = instance.values[static_cast<Eigen::Index>(i)];
  p.target = instance.values[static_cast<Eigen::Index>(schema.target_index())];
  return p;
}

}  // namespace conad
