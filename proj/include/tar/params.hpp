#pragma once

#include <map>
#include <string>
#include <vector>

#include "tar/rng.hpp"
#include "tar/tensor.hpp"

namespace tar {

// Named trainable tensors in registration order.
class ParamStore {
 public:
  // Registers a new parameter; throws ContractError on duplicate names.
  Tensor add(const std::string& name, Shape shape);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return names_.size(); }
  std::size_t numel() const;

  void zero_grad();

  // Rounds every value to the active precision.
  void round_values();

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> index_;
};

// U(-b, b) with b = sqrt(6 / fan_in).
void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng);
// U(-b, b) with b = sqrt(3 / fan_in); unit-gain linear layers.
void lecun_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

}  // namespace tar
