#ifndef LUMEN_CHECKPOINT_HPP
#define LUMEN_CHECKPOINT_HPP

#include <torch/torch.h>
#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumen/common.hpp"

namespace lumen {

// Versioned binary container: magic, format version, config JSON, named
// tensors (name, dtype, shape, raw little-endian data), extra JSON, CRC32 of
// the payload. Writing is deterministic, so save -> load -> save round-trips
// byte-identically. Layout is native-endian; the reproducibility contract is
// per-platform.

struct NamedTensor {
  std::string name;
  torch::Tensor tensor;
};

struct Container {
  nlohmann::ordered_json config;
  std::vector<NamedTensor> tensors;
  nlohmann::ordered_json extra;
};

namespace detail {

inline constexpr char kContainerMagic[8] = {'L', 'U', 'M', 'E', 'N', 'C', 'K', '1'};
inline constexpr uint32_t kContainerVersion = 1;

template <typename T>
void append_pod(std::string& buf, T value) {
  buf.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void append_sized(std::string& buf, const std::string& s) {
  append_pod<uint64_t>(buf, s.size());
  buf.append(s);
}

struct Cursor {
  const std::string& buf;
  size_t pos = 0;

  template <typename T>
  T read_pod() {
    if (pos + sizeof(T) > buf.size()) throw IntegrityError("truncated checkpoint payload");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  std::string read_sized() {
    auto n = read_pod<uint64_t>();
    if (pos + n > buf.size()) throw IntegrityError("truncated checkpoint payload");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

inline uint8_t dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    default: throw IntegrityError("unsupported tensor dtype in checkpoint");
  }
}

inline torch::ScalarType tag_dtype(uint8_t tag) {
  switch (tag) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    default: throw IntegrityError("unknown tensor dtype tag in checkpoint");
  }
}

}  // namespace detail

inline void save_container(const Container& c, const std::string& path) {
  std::string payload;
  detail::append_pod<uint32_t>(payload, detail::kContainerVersion);
  detail::append_sized(payload, c.config.dump());

  detail::append_pod<uint64_t>(payload, c.tensors.size());
  for (const auto& nt : c.tensors) {
    auto t = nt.tensor.detach().contiguous().cpu();
    detail::append_sized(payload, nt.name);
    detail::append_pod<uint8_t>(payload, detail::dtype_tag(t.scalar_type()));
    detail::append_pod<uint32_t>(payload, static_cast<uint32_t>(t.dim()));
    for (int64_t d = 0; d < t.dim(); ++d) {
      detail::append_pod<uint64_t>(payload, static_cast<uint64_t>(t.size(d)));
    }
    auto nbytes = static_cast<uint64_t>(t.numel()) * t.element_size();
    detail::append_pod<uint64_t>(payload, nbytes);
    payload.append(reinterpret_cast<const char*>(t.const_data_ptr()), nbytes);
  }

  detail::append_sized(payload, c.extra.dump());

  auto crc = static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size())));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(detail::kContainerMagic, sizeof(detail::kContainerMagic));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  out.flush();
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline Container load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr size_t kMagicLen = sizeof(detail::kContainerMagic);
  if (file.size() < kMagicLen + sizeof(uint32_t) ||
      std::memcmp(file.data(), detail::kContainerMagic, kMagicLen) != 0) {
    throw IntegrityError("not a checkpoint container: " + path);
  }
  std::string payload = file.substr(kMagicLen, file.size() - kMagicLen - sizeof(uint32_t));
  uint32_t stored_crc;
  std::memcpy(&stored_crc, file.data() + file.size() - sizeof(uint32_t), sizeof(uint32_t));
  auto crc = static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size())));
  if (crc != stored_crc) throw IntegrityError("checkpoint CRC mismatch: " + path);

  detail::Cursor cur{payload};
  if (cur.read_pod<uint32_t>() != detail::kContainerVersion) {
    throw IntegrityError("unsupported checkpoint version: " + path);
  }

  Container c;
  c.config = nlohmann::ordered_json::parse(cur.read_sized());
  auto n_tensors = cur.read_pod<uint64_t>();
  c.tensors.reserve(n_tensors);
  for (uint64_t i = 0; i < n_tensors; ++i) {
    NamedTensor nt;
    nt.name = cur.read_sized();
    auto dtype = detail::tag_dtype(cur.read_pod<uint8_t>());
    auto ndim = cur.read_pod<uint32_t>();
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = static_cast<int64_t>(cur.read_pod<uint64_t>());
    auto nbytes = cur.read_pod<uint64_t>();
    auto t = torch::empty(shape, torch::TensorOptions(dtype));
    if (static_cast<uint64_t>(t.numel()) * t.element_size() != nbytes) {
      throw IntegrityError("tensor byte count mismatch in checkpoint: " + nt.name);
    }
    if (cur.pos + nbytes > payload.size()) throw IntegrityError("truncated checkpoint payload");
    std::memcpy(t.data_ptr(), payload.data() + cur.pos, nbytes);
    cur.pos += nbytes;
    nt.tensor = t;
    c.tensors.push_back(std::move(nt));
  }
  c.extra = nlohmann::ordered_json::parse(cur.read_sized());
  if (cur.pos != payload.size()) throw IntegrityError("trailing bytes in checkpoint: " + path);
  return c;
}

/// Snapshots a module's parameters in registration order under a name prefix.
inline void collect_parameters(const std::string& prefix, const torch::nn::Module& module,
                               std::vector<NamedTensor>& out) {
  for (const auto& p : module.named_parameters(/*recurse=*/true)) {
    out.push_back({prefix + "/" + p.key(), p.value().detach().clone()});
  }
}

/// Copies named tensors back into a module; every parameter must be present
/// with a matching shape.
inline void restore_parameters(const std::string& prefix, torch::nn::Module& module,
                               const std::vector<NamedTensor>& tensors) {
  torch::NoGradGuard guard;
  for (auto& p : module.named_parameters(/*recurse=*/true)) {
    auto name = prefix + "/" + p.key();
    const NamedTensor* found = nullptr;
    for (const auto& nt : tensors) {
      if (nt.name == name) {
        found = &nt;
        break;
      }
    }
    if (!found) throw IntegrityError("checkpoint missing parameter: " + name);
    if (found->tensor.sizes() != p.value().sizes()) {
      throw IntegrityError("checkpoint shape mismatch for parameter: " + name);
    }
    p.value().copy_(found->tensor);
  }
}

}  // namespace lumen

#endif  // LUMEN_CHECKPOINT_HPP
