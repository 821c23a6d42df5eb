#include "simt/harness/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "simt/errors.hpp"

namespace simt::harness {

namespace {

constexpr char kMagic[8] = {'S', 'I', 'M', 'T', 'C', 'K', 'P', 'T'};

struct Section {
  std::string name;
  ad::Shape shape;
  std::vector<double> data;
};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_++]))
                                     << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf_[pos_++]))
                                     << (8 * i);
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  void need(size_t n) {
    if (pos_ + n > buf_.size())
      throw IoError("checkpoint " + path_ + ": truncated at byte " + std::to_string(pos_));
  }
  const std::string& buf_;
  std::string path_;
  size_t pos_ = 0;
};

void add_scalar(std::vector<Section>& out, const std::string& name, double v) {
  out.push_back({name, ad::Shape{1}, {v}});
}

void add_params(std::vector<Section>& out, const std::string& prefix, const ad::ParamSet& p) {
  for (const auto& e : p) out.push_back({prefix + "/" + e.name, e.shape, e.data});
}

ad::ParamSet take_params(const std::vector<Section>& sections, const std::string& prefix) {
  ad::ParamSet p;
  const std::string pre = prefix + "/";
  for (const auto& s : sections)
    if (s.name.rfind(pre, 0) == 0) p.add(s.name.substr(pre.size()), s.shape, s.data);
  return p;
}

double take_scalar(const std::vector<Section>& sections, const std::string& name, double fb) {
  for (const auto& s : sections)
    if (s.name == name) return s.data.at(0);
  return fb;
}

}  // namespace

uint32_t crc32(const void* data, size_t len) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  uint32_t c = 0xffffffffu;
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xff] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void checkpoint_save(const Checkpoint& ckpt, const std::string& path) {
  std::vector<Section> sections;
  add_scalar(sections, "meta/step", static_cast<double>(ckpt.step));
  add_params(sections, "theta", ckpt.theta);
  add_params(sections, "moment", ckpt.theta_moment);
  add_params(sections, "adam_m", ckpt.adam_m);
  add_params(sections, "adam_v", ckpt.adam_v);
  add_scalar(sections, "meta/adam_t", static_cast<double>(ckpt.adam_t));
  add_params(sections, "alpha", ckpt.metasgd_alpha);
  add_params(sections, "alpha_m", ckpt.alpha_m);
  add_params(sections, "alpha_v", ckpt.alpha_v);
  add_scalar(sections, "meta/alpha_t", static_cast<double>(ckpt.alpha_t));
  {
    std::vector<double> rng(4);
    for (int i = 0; i < 4; ++i) {
      double v;
      std::memcpy(&v, &ckpt.episode_rng[i], 8);
      rng[i] = v;
    }
    sections.push_back({"rng/episode", ad::Shape{4}, rng});
  }
  add_scalar(sections, "meta/has_best", ckpt.has_best ? 1.0 : 0.0);
  add_scalar(sections, "meta/best_step", static_cast<double>(ckpt.best_step));
  add_scalar(sections, "meta/best_metric", ckpt.best_metric);
  add_params(sections, "best_theta", ckpt.best_theta);
  add_params(sections, "best_moment", ckpt.best_moment);
  add_scalar(sections, "meta/best_return", ckpt.best_return);

  std::string out(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(sections.size()));
  for (const auto& s : sections) {
    put_u32(out, static_cast<uint32_t>(s.name.size()));
    out.append(s.name);
    put_u32(out, static_cast<uint32_t>(s.shape.rank()));
    for (int d = 0; d < s.shape.rank(); ++d) put_u64(out, static_cast<uint64_t>(s.shape[d]));
    put_u64(out, static_cast<uint64_t>(s.data.size()));
    for (double v : s.data) put_f64(out, v);
  }
  put_u32(out, crc32(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint_save: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("checkpoint_save: write failed for " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint_load: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 20) throw IoError("checkpoint_load: " + path + " too short");
  if (std::memcmp(buf.data(), kMagic, 8) != 0)
    throw IoError("checkpoint_load: " + path + " is not a SIMTCKPT file");

  const uint32_t stored_crc = crc32(buf.data(), buf.size() - 4);
  uint32_t file_crc = 0;
  for (int i = 0; i < 4; ++i)
    file_crc |= static_cast<uint32_t>(static_cast<uint8_t>(buf[buf.size() - 4 + i])) << (8 * i);
  if (stored_crc != file_crc)
    throw IoError("checkpoint_load: " + path + " failed the CRC32 check (corrupt file)");

  Reader r(buf, path);
  r.bytes(8);  // magic
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint_load: " + path + " has version " + std::to_string(version) +
                  ", expected " + std::to_string(kCheckpointVersion));
  const uint32_t count = r.u32();
  std::vector<Section> sections;
  sections.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    Section s;
    const uint32_t name_len = r.u32();
    s.name = r.bytes(name_len);
    const uint32_t rank = r.u32();
    if (rank > 4) throw IoError("checkpoint_load: bad section rank in " + path);
    std::vector<int64_t> dims(rank);
    for (uint32_t d = 0; d < rank; ++d) dims[d] = static_cast<int64_t>(r.u64());
    ad::Shape shape;
    switch (rank) {
      case 0: shape = ad::Shape{}; break;
      case 1: shape = ad::Shape{dims[0]}; break;
      case 2: shape = ad::Shape{dims[0], dims[1]}; break;
      case 3: shape = ad::Shape{dims[0], dims[1], dims[2]}; break;
      default: shape = ad::Shape{dims[0], dims[1], dims[2], dims[3]}; break;
    }
    const uint64_t n = r.u64();
    if (static_cast<int64_t>(n) != shape.numel())
      throw IoError("checkpoint_load: section length mismatch in " + path);
    s.shape = shape;
    s.data.resize(n);
    for (uint64_t k = 0; k < n; ++k) s.data[k] = r.f64();
    sections.push_back(std::move(s));
  }

  Checkpoint c;
  c.step = static_cast<int64_t>(take_scalar(sections, "meta/step", 0));
  c.theta = take_params(sections, "theta");
  c.theta_moment = take_params(sections, "moment");
  c.adam_m = take_params(sections, "adam_m");
  c.adam_v = take_params(sections, "adam_v");
  c.adam_t = static_cast<int64_t>(take_scalar(sections, "meta/adam_t", 0));
  c.metasgd_alpha = take_params(sections, "alpha");
  c.alpha_m = take_params(sections, "alpha_m");
  c.alpha_v = take_params(sections, "alpha_v");
  c.alpha_t = static_cast<int64_t>(take_scalar(sections, "meta/alpha_t", 0));
  for (const auto& s : sections)
    if (s.name == "rng/episode")
      for (int i = 0; i < 4; ++i) std::memcpy(&c.episode_rng[i], &s.data[i], 8);
  c.has_best = take_scalar(sections, "meta/has_best", 0) != 0;
  c.best_step = static_cast<int64_t>(take_scalar(sections, "meta/best_step", 0));
  c.best_metric = take_scalar(sections, "meta/best_metric", 0);
  c.best_theta = take_params(sections, "best_theta");
  c.best_moment = take_params(sections, "best_moment");
  c.best_return = take_scalar(sections, "meta/best_return", 0);
  return c;
}

}  // namespace simt::harness
