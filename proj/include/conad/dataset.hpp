#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "conad/keyval.hpp"
#include "conad/schema.hpp"

namespace conad {

/// Role assignment for CSV ingestion: which column is the target and,
/// optionally, which columns form the context (default: all non-target,
/// non-id columns). Parsed from a `key = value` schema spec file with keys
/// `target` and `context`.
struct SchemaSpec {
  std::string target;
  std::vector<std::string> context;  // empty: all remaining columns

  static SchemaSpec from_keyvals(const KeyValues& kvs, const std::string& origin) {
    SchemaSpec spec;
    for (const auto& [key, value] : kvs) {
      if (key == "target") {
        spec.target = value;
      } else if (key == "context") {
        spec.context = split_list(value);
      } else {
        fail("%s: unknown schema key '%s'", origin.c_str(), key.c_str());
      }
    }
    if (spec.target.empty()) fail("%s: schema spec must name a target column", origin.c_str());
    return spec;
  }

  static SchemaSpec load(const std::string& path) {
    return from_keyvals(load_keyvals(path), path);
  }
};

/// Immutable collection of binary cases. Cells are stored as 0/1 integers;
/// accessors hand out real-valued matrices for the downstream math.
class Dataset {
 public:
  using CellMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

  Dataset(AttributeSchema schema, std::vector<std::string> case_ids, CellMatrix cells)
      : schema_(std::move(schema)), case_ids_(std::move(case_ids)), cells_(std::move(cells)) {
    if (cells_.rows() != static_cast<Eigen::Index>(case_ids_.size()))
      fail("dataset: %ld rows but %zu case ids", static_cast<long>(cells_.rows()),
           case_ids_.size());
    if (cells_.cols() != static_cast<Eigen::Index>(schema_.size()))
      fail("dataset: %ld columns but schema has %zu attributes",
           static_cast<long>(cells_.cols()), schema_.size());
    for (Eigen::Index r = 0; r < cells_.rows(); ++r)
      for (Eigen::Index c = 0; c < cells_.cols(); ++c)
        if (cells_(r, c) > 1)
          fail("dataset: non-binary cell at row %ld, column '%s'", static_cast<long>(r),
               schema_.name(static_cast<std::size_t>(c)).c_str());
    for (std::size_t i = 0; i < case_ids_.size(); ++i) {
      if (case_ids_[i].empty()) fail("dataset: empty case id at row %zu", i);
      if (!id_index_.emplace(case_ids_[i], i).second)
        fail("dataset: duplicate case id '%s'", case_ids_[i].c_str());
    }
  }

  std::size_t size() const { return case_ids_.size(); }
  const AttributeSchema& schema() const { return schema_; }
  const std::vector<std::string>& case_ids() const { return case_ids_; }
  const CellMatrix& cells() const { return cells_; }

  bool contains(const std::string& id) const { return id_index_.count(id) != 0; }

  std::size_t index_of(const std::string& id) const {
    const auto it = id_index_.find(id);
    if (it == id_index_.end()) fail("dataset: unknown case id '%s'", id.c_str());
    return it->second;
  }

  Instance instance(std::size_t row) const {
    Instance x;
    x.values = cells_.row(static_cast<Eigen::Index>(row)).cast<double>().transpose();
    return x;
  }

  /// n x d_c real matrix of the context attributes, columns in schema order.
  Eigen::MatrixXd context_matrix() const {
    const auto& idx = schema_.context_indices();
    Eigen::MatrixXd out(cells_.rows(), static_cast<Eigen::Index>(idx.size()));
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out.col(j) =
          cells_.col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)])).cast<double>();
    return out;
  }

  Eigen::VectorXd target_vector() const {
    return cells_.col(static_cast<Eigen::Index>(schema_.target_index())).cast<double>();
  }

  /// Target values as 0/1 class labels.
  std::vector<int> labels() const {
    std::vector<int> out(size());
    const Eigen::Index t = static_cast<Eigen::Index>(schema_.target_index());
    for (std::size_t i = 0; i < size(); ++i)
      out[i] = cells_(static_cast<Eigen::Index>(i), t);
    return out;
  }

  /// Copy of this dataset with one case removed.
  Dataset without(const std::string& id) const {
    const std::size_t drop = index_of(id);
    std::vector<std::string> ids;
    ids.reserve(size() - 1);
    CellMatrix cells(cells_.rows() - 1, cells_.cols());
    Eigen::Index out = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      if (i == drop) continue;
      ids.push_back(case_ids_[i]);
      cells.row(out++) = cells_.row(static_cast<Eigen::Index>(i));
    }
    return Dataset(schema_, std::move(ids), std::move(cells));
  }

  /// Copy of this dataset with the identified case's row replaced.
  Dataset with_row_replaced(const std::string& id, const Eigen::VectorXd& values) const {
    const std::size_t row = index_of(id);
    if (values.size() != cells_.cols())
      fail("dataset: replacement row has length %ld, expected %ld",
           static_cast<long>(values.size()), static_cast<long>(cells_.cols()));
    CellMatrix cells = cells_;
    for (Eigen::Index c = 0; c < cells.cols(); ++c) {
      const double v = values[c];
      if (v != 0.0 && v != 1.0)
        fail("dataset: replacement value %g at column %ld is not binary", v,
             static_cast<long>(c));
      cells(static_cast<Eigen::Index>(row), c) = static_cast<std::uint8_t>(v);
    }
    return Dataset(schema_, case_ids_, std::move(cells));
  }

 private:
  AttributeSchema schema_;
  std::vector<std::string> case_ids_;
  CellMatrix cells_;
  std::unordered_map<std::string, std::size_t> id_index_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

/// Load a comma-separated file with a header row. Cells must be 0 or 1; an
/// `id` column, when present, supplies case ids (otherwise row ordinals are
/// used). Columns outside the schema spec's context/target are dropped.
inline Dataset load_csv(const std::string& path, const SchemaSpec& spec) {
  std::ifstream in(path);
  if (!in) fail("cannot open dataset file '%s'", path.c_str());

  std::string line;
  if (!std::getline(in, line)) fail("%s: missing header row", path.c_str());
  const std::vector<std::string> header = detail::split_csv_line(line);

  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) fail("%s: empty column name in header", path.c_str());
    if (!column_of.emplace(header[i], i).second)
      fail("%s: duplicate column '%s' in header", path.c_str(), header[i].c_str());
  }

  // Schema is resolved against the header before any row is read.
  if (!column_of.count(spec.target))
    fail("%s: target column '%s' not present in header", path.c_str(), spec.target.c_str());

  const bool has_id = column_of.count("id") != 0;
  std::vector<std::size_t> keep_columns;  // source column index per attribute
  std::vector<std::string> names;
  if (spec.context.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == "id" || header[i] == spec.target) continue;
      keep_columns.push_back(i);
      names.push_back(header[i]);
    }
  } else {
    for (const auto& col : spec.context) {
      const auto it = column_of.find(col);
      if (it == column_of.end())
        fail("%s: context column '%s' not present in header", path.c_str(), col.c_str());
      if (col == spec.target)
        fail("%s: column '%s' named as both context and target", path.c_str(), col.c_str());
      if (col == "id") fail("%s: the id column cannot be a context attribute", path.c_str());
      keep_columns.push_back(it->second);
      names.push_back(col);
    }
  }
  std::vector<std::size_t> context_indices(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) context_indices[i] = i;
  keep_columns.push_back(column_of[spec.target]);
  names.push_back(spec.target);
  AttributeSchema schema(names, context_indices, names.size() - 1);

  std::vector<std::string> ids;
  std::vector<std::uint8_t> flat;
  std::size_t rowno = 1;  // header was line 1
  while (std::getline(in, line)) {
    ++rowno;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      fail("%s:%zu: expected %zu cells, got %zu", path.c_str(), rowno, header.size(),
           cells.size());
    ids.push_back(has_id ? cells[column_of["id"]] : std::to_string(ids.size()));
    for (std::size_t c : keep_columns) {
      const std::string& cell = cells[c];
      if (cell == "0") {
        flat.push_back(0);
      } else if (cell == "1") {
        flat.push_back(1);
      } else {
        fail("%s:%zu: non-binary value '%s' in column '%s'", path.c_str(), rowno, cell.c_str(),
             header[c].c_str());
      }
    }
  }

  Dataset::CellMatrix cells(static_cast<Eigen::Index>(ids.size()),
                            static_cast<Eigen::Index>(schema.size()));
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (std::size_t c = 0; c < schema.size(); ++c)
      cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          flat[r * schema.size() + c];
  return Dataset(std::move(schema), std::move(ids), std::move(cells));
}

inline void write_csv(const Dataset& dataset, std::ostream& out) {
  out << "id";
  for (const auto& name : dataset.schema().attribute_names()) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    out << dataset.case_ids()[r];
    for (Eigen::Index c = 0; c < dataset.cells().cols(); ++c)
      out << ',' << static_cast<int>(dataset.cells()(static_cast<Eigen::Index>(r), c));
    out << '\n';
  }
}

inline void write_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write dataset file '%s'", path.c_str());
  write_csv(dataset, static_cast<std::ostream&>(out));
}

}  // namespace conad
