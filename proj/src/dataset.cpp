#include "ngmm/dataset.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ngmm {

Eigen::Index EnvDataset::total_size() const {
  Eigen::Index n = 0;
  for (const auto& e : envs) n += e.block.size();
  return n;
}

void EnvDataset::validate() const {
  if (envs.empty()) throw std::invalid_argument("dataset has no environments");
  std::set<int> ids;
  const Eigen::Index d = feature_dim();
  for (const auto& e : envs) {
    if (!ids.insert(e.id).second) throw std::invalid_argument("duplicate environment id " + std::to_string(e.id));
    if (e.block.features.cols() != d)
      throw std::invalid_argument("environment " + std::to_string(e.id) + " has inconsistent feature width");
    e.block.validate();
  }
  if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != d)
    throw std::invalid_argument("feature name count does not match feature width");
}

Eigen::MatrixXd EnvDataset::stacked_features() const {
  Eigen::MatrixXd x(total_size(), feature_dim());
  Eigen::Index row = 0;
  for (const auto& e : envs) {
    x.middleRows(row, e.block.size()) = e.block.features;
    row += e.block.size();
  }
  return x;
}

Eigen::VectorXd EnvDataset::stacked_responses() const {
  Eigen::VectorXd y(total_size());
  Eigen::Index row = 0;
  for (const auto& e : envs) {
    y.segment(row, e.block.size()) = e.block.responses;
    row += e.block.size();
  }
  return y;
}

std::vector<Eigen::Index> EnvDataset::offsets() const {
  std::vector<Eigen::Index> out{0};
  for (const auto& e : envs) out.push_back(out.back() + e.block.size());
  return out;
}

void write_dataset_csv(const EnvDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "env_id";
  for (Eigen::Index j = 0; j < data.feature_dim(); ++j)
    out << ',' << (data.feature_names.empty() ? "x" + std::to_string(j) : data.feature_names[j]);
  out << ",y\n";
  out << std::setprecision(17);
  for (const auto& e : data.envs) {
    for (Eigen::Index i = 0; i < e.block.size(); ++i) {
      out << e.id;
      for (Eigen::Index j = 0; j < e.block.features.cols(); ++j) out << ',' << e.block.features(i, j);
      out << ',' << e.block.responses(i) << '\n';
    }
  }
}

EnvDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string h; std::getline(ss, h, ',');) header.push_back(h);
  }
  if (header.size() < 3 || header.front() != "env_id" || header.back() != "y")
    throw std::runtime_error("'" + path + "': header must be env_id,<features...>,y");
  const std::size_t d = header.size() - 2;

  std::map<int, std::vector<std::vector<double>>> rows;
  std::vector<int> order;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> values;
    std::string cell;
    try {
      std::getline(ss, cell, ',');
      const int id = std::stoi(cell);
      while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
      if (values.size() != d + 1) throw std::runtime_error("wrong number of columns");
      if (!rows.count(id)) order.push_back(id);
      rows[id].push_back(std::move(values));
    } catch (const std::exception& ex) {
      throw std::runtime_error("'" + path + "' line " + std::to_string(line_no) + ": " + ex.what());
    }
  }

  EnvDataset data;
  data.feature_names.assign(header.begin() + 1, header.end() - 1);
  for (int id : order) {
    const auto& r = rows[id];
    Environment env{id, {Eigen::MatrixXd(r.size(), d), Eigen::VectorXd(r.size())}};
    for (std::size_t i = 0; i < r.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) env.block.features(i, j) = r[i][j];
      env.block.responses(i) = r[i][d];
    }
    data.envs.push_back(std::move(env));
  }
  data.validate();
  return data;
}

}  // namespace ngmm
