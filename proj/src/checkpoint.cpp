#include "hsn/checkpoint.hpp"

#include "hsn/errors.hpp"
#include "hsn/synthetic.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace hsn {

namespace {

template <class T>
void put(std::string& buf, T v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::string& buf, const std::string& s) {
  put<std::uint64_t>(buf, s.size());
  buf += s;
}

class Reader {
 public:
  explicit Reader(const std::string& b) : buf_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void read_doubles(double* out, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(out, buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw IntegrityError("checkpoint is truncated");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string buf(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(buf, kCheckpointVersion);
  put_string(buf, ckpt.config_text);
  put<std::uint64_t>(buf, ckpt.meta.size());
  for (const auto& [k, v] : ckpt.meta) {
    put_string(buf, k);
    put_string(buf, v);
  }
  put<std::uint64_t>(buf, ckpt.tensors.size());
  for (const auto& [name, m] : ckpt.tensors) {
    put_string(buf, name);
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(m.cols()));
    buf.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  put<std::uint64_t>(buf, fnv1a(buf));

  // Write-then-rename so an interrupted save never clobbers the previous checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof(kCheckpointMagic) + 12 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0) {
    throw IntegrityError("not a checkpoint file: " + path.string());
  }
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (stored != fnv1a(buf.substr(0, buf.size() - 8))) throw IntegrityError("checkpoint checksum mismatch");

  const std::string body = buf.substr(8, buf.size() - 16);
  Reader r(body);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_text = r.get_string();
  const auto n_meta = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    c.meta[k] = r.get_string();
  }
  const auto n_tensors = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = r.get_string();
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.read_doubles(m.data(), static_cast<std::size_t>(rows * cols));
    c.tensors.emplace(std::move(name), std::move(m));
  }
  return c;
}

}  // namespace hsn
