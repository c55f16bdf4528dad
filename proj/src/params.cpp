#include "tar/params.hpp"

#include <cmath>

#include "tar/errors.hpp"

namespace tar {

Tensor ParamStore::add(const std::string& name, Shape shape) {
  if (index_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
  Tensor t = Tensor::zeros(std::move(shape), true);
  names_.push_back(name);
  index_.emplace(name, t);
  return t;
}

const Tensor& ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  for (const auto& n : names_) out.push_back(index_.at(n));
  return out;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : index_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : index_) t.zero_grad();
}

void ParamStore::round_values() {
  for (auto& [name, t] : index_) {
    for (double& v : t.mutable_data()) v = round_to_precision(v);
  }
}

void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double b = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.mutable_data()) v = rng.uniform(-b, b);
}

void lecun_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double b = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (double& v : t.mutable_data()) v = rng.uniform(-b, b);
}

}  // namespace tar
