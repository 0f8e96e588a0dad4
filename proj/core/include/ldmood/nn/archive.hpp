#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ldmood/nn/adam.hpp"
#include "ldmood/nn/parameter.hpp"
#include "ldmood/nn/tensor.hpp"

namespace ldmood::nn {

/// Named-tensor archive ("NTA1"): u32 entry count; per entry a u16 name
/// length, UTF-8 name, u8 rank, rank u32 extents and float32 payload; then a
/// structured-text footer whose byte offset is stored in the final 8 bytes.
/// All integers and floats little-endian.
struct TensorArchive {
    struct Entry {
        std::string name;
        Tensor<float> tensor;
    };
    std::vector<Entry> entries;
    std::string footer;

    void add(std::string name, Tensor<float> tensor);
    const Tensor<float>* find(const std::string& name) const;
    const Tensor<float>& at(const std::string& name) const;
};

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(std::span<const std::uint8_t> bytes);

void save_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive load_archive(const std::filesystem::path& path);

/// Copy every parameter value into the archive as "<prefix><name>".
template <typename T>
void store_parameters(TensorArchive& archive, const ParameterStore<T>& params, const std::string& prefix = "");

/// Inverse of store_parameters; every parameter must be present with a matching shape.
template <typename T>
void load_parameters(const TensorArchive& archive, ParameterStore<T>& params, const std::string& prefix = "");

template <typename T>
void store_adam(TensorArchive& archive, const AdamState<T>& state, const std::string& prefix = "adam");

/// Returns false (leaving `state` untouched) when the archive has no optimizer state.
template <typename T>
bool load_adam(const TensorArchive& archive, AdamState<T>& state, const ParameterStore<T>& params,
               std::uint64_t step, const std::string& prefix = "adam");

}  // namespace ldmood::nn
