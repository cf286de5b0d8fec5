// Copyright 2026 The lstcl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <string>

#include "lstcl/autograd.hpp"
#include "lstcl/tensor.hpp"

namespace lstcl {

// Every learnable tensor is addressable by a stable name; std::map keeps
// iteration order deterministic for updates, checkpoints and reductions.
using ParamStore = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;
using VarMap = std::map<std::string, ag::Var>;

// Binds store entries onto a tape, as gradient leaves (trainable) or
// constants (frozen / momentum side). Records name -> Var when an index is
// supplied so gradients can be read back by name.
class Binder {
 public:
  Binder(ag::Tape& tape, const ParamStore& store, bool trainable,
         VarMap* index = nullptr)
      : tape_(tape), store_(store), trainable_(trainable), index_(index) {}

  ag::Var operator()(const std::string& name) {
    auto it = store_.find(name);
    if (it == store_.end())
      throw ParamMapError("missing parameter: " + name);
    ag::Var v = trainable_ ? tape_.leaf(it->second) : tape_.constant(it->second);
    if (index_ != nullptr) (*index_)[name] = v;
    return v;
  }

  const ParamStore& store() const { return store_; }
  bool trainable() const { return trainable_; }

 private:
  ag::Tape& tape_;
  const ParamStore& store_;
  bool trainable_;
  VarMap* index_;
};

inline GradMap collect_grads(const ag::Tape& tape, const VarMap& index) {
  GradMap grads;
  for (const auto& [name, var] : index)
    grads.emplace(name, tape.grad_or_zeros(var));
  return grads;
}

}  // namespace lstcl
