#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "motiondiff/autodiff.hpp"
#include "motiondiff/tensor.hpp"

namespace motiondiff {

// Named-tensor container with a versioned binary encoding:
//
//   magic "MDIFFCKP" | u32 version | u64 count |
//   per entry: u32 name length | name bytes | u32 rank | i64 extents... |
//              f64 values... (row major)
//
// All integers and doubles are little endian regardless of host. Entry order
// is insertion order and is preserved by save/load, so writing the same
// contents twice produces byte-identical files. The same container carries
// model weights, dataset shards, and generated motion.
class Checkpoint {
public:
    static constexpr uint32_t kVersion = 1;

    void put(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    const Tensor* find(const std::string& name) const;
    const Tensor& get(const std::string& name) const;  // throws Io when absent
    size_t size() const { return entries_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    // Captures every parameter by name.
    static Checkpoint from_params(const ParameterList& params);

    // Restores values into matching parameters; every parameter must be
    // present with an identical shape.
    void load_into(const ParameterList& params) const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace motiondiff
