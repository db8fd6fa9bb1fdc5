#include "lvr/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace lvr {

void Dataset::validate() const {
  if (states.size() != actions.size())
    throw InvalidInput("dataset: states and actions have different lengths");
  const std::size_t sd = state_dim();
  const std::size_t ad = action_dim();
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].size() != sd || actions[i].size() != ad)
      throw InvalidInput("dataset: inconsistent dimensions at sample " + std::to_string(i));
    for (double v : states[i])
      if (!std::isfinite(v)) throw InvalidInput("dataset: non-finite state entry");
    for (double v : actions[i])
      if (!std::isfinite(v)) throw InvalidInput("dataset: non-finite action entry");
  }
}

Dataset Dataset::prefix(std::size_t n) const {
  if (n > states.size()) throw InvalidInput("dataset prefix: n exceeds dataset size");
  Dataset out;
  out.states.assign(states.begin(), states.begin() + n);
  out.actions.assign(actions.begin(), actions.begin() + n);
  out.dt = dt;
  out.meta = meta;
  return out;
}

Standardizer Standardizer::fit(const std::vector<Vec>& states) {
  if (states.empty()) throw InvalidInput("standardizer: no samples");
  const std::size_t d = states.front().size();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  for (const Vec& x : states)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x[j];
  for (double& v : s.mean) v /= static_cast<double>(states.size());
  for (const Vec& x : states)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[j] - s.mean[j];
      s.std[j] += c * c;
    }
  for (double& v : s.std) {
    v = std::sqrt(v / static_cast<double>(states.size()));
    if (v < 1e-12) v = 1.0;  // constant dimension: leave it centered only
  }
  return s;
}

Vec Standardizer::apply(const Vec& x) const {
  if (x.size() != mean.size()) throw InvalidInput("standardizer: dimension mismatch");
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / std[j];
  return out;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "t";
  for (std::size_t j = 0; j < data.state_dim(); ++j) f << ",x" << j;
  for (std::size_t j = 0; j < data.action_dim(); ++j) f << ",u" << j;
  f << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    f << format_double(static_cast<double>(i) * data.dt);
    for (double v : data.states[i]) f << "," << format_double(v);
    for (double v : data.actions[i]) f << "," << format_double(v);
    f << "\n";
  }
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(f, line)) throw InvalidInput("dataset csv: empty file");
  std::size_t n_state = 0, n_action = 0;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (!col.empty() && col[0] == 'x') ++n_state;
      if (!col.empty() && col[0] == 'u') ++n_action;
    }
  }
  if (n_state == 0 || n_action == 0) throw InvalidInput("dataset csv: malformed header");
  Dataset data;
  bool first = true;
  double t0 = 0.0, t1 = 0.0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    if (row.size() != 1 + n_state + n_action)
      throw InvalidInput("dataset csv: wrong column count in row");
    if (first) {
      t0 = row[0];
      first = false;
    } else if (data.size() == 1) {
      t1 = row[0];
    }
    data.states.emplace_back(row.begin() + 1, row.begin() + 1 + n_state);
    data.actions.emplace_back(row.begin() + 1 + n_state, row.end());
  }
  if (data.size() >= 2) data.dt = t1 - t0;
  data.validate();
  return data;
}

}  // namespace lvr
