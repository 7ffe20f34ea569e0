#include "nppo/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nppo/error.hpp"

namespace nppo {

namespace {

void append_f64le(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffU));
    bits >>= 8;
  }
}

double read_f64le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) {
    bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string encode_checkpoint(const ParamSet& params, const nlohmann::json& meta) {
  nlohmann::json header;
  header["names"] = nlohmann::json::array();
  header["shapes"] = nlohmann::json::array();
  for (const auto& [name, value] : params.values()) {
    header["names"].push_back(name);
    header["shapes"].push_back(value.shape());
  }
  header["dtype"] = "f64le";
  if (!meta.is_null() && !meta.empty()) header["meta"] = meta;

  std::string out = kCheckpointMagic;
  out += header.dump();
  out += '\n';
  out.reserve(out.size() + params.num_scalars() * 8);
  for (const auto& [_, value] : params.values()) {
    for (double v : value.data()) append_f64le(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const std::size_t magic_len = std::strlen(kCheckpointMagic);
  if (bytes.compare(0, magic_len, kCheckpointMagic) != 0) {
    throw CheckpointError("not an NPPO1 checkpoint (bad magic)");
  }
  const std::size_t eol = bytes.find('\n', magic_len);
  if (eol == std::string::npos) throw CheckpointError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(magic_len, eol - magic_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("dtype", "") != "f64le") throw CheckpointError("unsupported dtype");
  const auto& names = header.at("names");
  const auto& shapes = header.at("shapes");
  if (!names.is_array() || !shapes.is_array() || names.size() != shapes.size()) {
    throw CheckpointError("checkpoint names/shapes mismatch");
  }

  Checkpoint ckpt;
  if (header.contains("meta")) ckpt.meta = header["meta"];
  std::size_t offset = eol + 1;
  for (std::size_t i = 0; i < names.size(); ++i) {
    Shape shape = shapes[i].get<Shape>();
    const std::size_t n = shape_numel(shape);
    if (offset + n * 8 > bytes.size()) throw CheckpointError("truncated checkpoint data");
    std::vector<double> data(n);
    for (std::size_t k = 0; k < n; ++k) data[k] = read_f64le(bytes.data() + offset + 8 * k);
    offset += n * 8;
    ckpt.params.add(names[i].get<std::string>(), Tensor(std::move(shape), std::move(data)));
  }
  if (offset != bytes.size()) throw CheckpointError("trailing bytes after checkpoint data");
  return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const nlohmann::json& meta) {
  write_file(path, encode_checkpoint(params, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::string bytes_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) { return bytes_hash(read_file(path)); }

}  // namespace nppo
