#include "sshd/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sshd/errors.hpp"

namespace sshd {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path);
}

// PGM header token reader that tracks byte offsets for error reports.
struct PgmCursor {
  const std::vector<uint8_t>& b;
  size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < b.size()) {
      if (std::isspace(b[pos])) {
        ++pos;
      } else if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }
  int64_t read_uint(const std::string& path, const char* field) {
    skip_space_and_comments();
    const size_t start = pos;
    int64_t v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos] - '0');
      if (v > (int64_t(1) << 40)) break;
      ++pos;
    }
    if (pos == start)
      throw FormatError(path + ": bad " + field + " at byte offset " + std::to_string(start));
    return v;
  }
};

}  // namespace

GrayImage load_pgm(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError(path + ": bad PGM magic at byte offset 0 (want P5)");
  PgmCursor cur{bytes, 2};
  const int64_t w = cur.read_uint(path, "width");
  const int64_t h = cur.read_uint(path, "height");
  const size_t maxval_off = cur.pos;
  const int64_t maxval = cur.read_uint(path, "maxval");
  if (maxval < 1 || maxval > 65535)
    throw FormatError(path + ": bad maxval at byte offset " + std::to_string(maxval_off));
  if (w < 1 || h < 1) throw FormatError(path + ": bad image extents");
  if (cur.pos >= bytes.size() || !std::isspace(bytes[cur.pos]))
    throw FormatError(path + ": missing whitespace after maxval at byte offset " +
                      std::to_string(cur.pos));
  ++cur.pos;  // exactly one whitespace byte before the raster, per the format
  const int bpp = maxval > 255 ? 2 : 1;
  const size_t need = static_cast<size_t>(w) * static_cast<size_t>(h) * static_cast<size_t>(bpp);
  if (bytes.size() - cur.pos < need)
    throw FormatError(path + ": raster truncated at byte offset " + std::to_string(bytes.size()) +
                      " (need " + std::to_string(cur.pos + need) + " bytes)");
  GrayImage img(h, w);
  const uint8_t* p = bytes.data() + cur.pos;
  const double inv = 1.0 / static_cast<double>(maxval);
  for (int64_t i = 0; i < h * w; ++i) {
    uint32_t raw;
    if (bpp == 2) {
      raw = (static_cast<uint32_t>(p[2 * i]) << 8) | p[2 * i + 1];  // big-endian
    } else {
      raw = p[i];
    }
    img.v[static_cast<size_t>(i)] = static_cast<float>(static_cast<double>(raw) * inv);
  }
  return img;
}

void save_pgm(const std::string& path, const GrayImage& img, int bits) {
  if (bits != 8 && bits != 16) throw UsageError("save_pgm: bits must be 8 or 16");
  const uint32_t maxval = bits == 8 ? 255u : 65535u;
  std::string header = "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n" +
                       std::to_string(maxval) + "\n";
  std::vector<uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.v.size() * (bits / 8));
  for (const float f : img.v) {
    const double clamped = std::min(1.0, std::max(0.0, static_cast<double>(f)));
    // round half up
    const uint32_t q = std::min(maxval, static_cast<uint32_t>(clamped * maxval + 0.5));
    if (bits == 16) {
      bytes.push_back(static_cast<uint8_t>(q >> 8));
      bytes.push_back(static_cast<uint8_t>(q & 0xff));
    } else {
      bytes.push_back(static_cast<uint8_t>(q));
    }
  }
  write_file(path, bytes);
}

BinaryMask load_mask_pgm(const std::string& path) {
  const GrayImage img = load_pgm(path);
  BinaryMask m(img.h, img.w);
  for (size_t i = 0; i < img.v.size(); ++i) m.v[i] = img.v[i] > 0.0f ? 1 : 0;
  return m;
}

void save_mask_pgm(const std::string& path, const BinaryMask& mask) {
  GrayImage img(mask.h, mask.w);
  for (size_t i = 0; i < mask.v.size(); ++i) img.v[i] = mask.v[i] ? 1.0f : 0.0f;
  save_pgm(path, img, 8);
}

// ---------------------------------------------------------------------------

std::vector<PointLabel> load_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<PointLabel> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw FormatError(path + ": line " + std::to_string(lineno) + ": expected \"x,y\"");
    try {
      size_t used = 0;
      const int x = std::stoi(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("trailing");
      const std::string ypart = line.substr(comma + 1);
      const int y = std::stoi(ypart, &used);
      if (used != ypart.size()) throw std::invalid_argument("trailing");
      out.push_back({x, y});
    } catch (const std::exception&) {
      throw FormatError(path + ": line " + std::to_string(lineno) + ": expected \"x,y\" integers");
    }
  }
  return out;
}

void save_labels_csv(const std::string& path, const std::vector<PointLabel>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  for (const PointLabel& p : labels) out << p.x << "," << p.y << "\n";
  if (!out) throw FormatError("short write to " + path);
}

Sample load_sample(const std::string& image_path, const std::string& label_path,
                   const std::string& mask_path) {
  Sample s;
  s.image = load_pgm(image_path);
  s.id = std::filesystem::path(image_path).stem().string();
  s.labels = load_labels_csv(label_path);
  for (size_t i = 0; i < s.labels.size(); ++i) {
    const PointLabel& p = s.labels[i];
    if (p.x < 0 || p.x >= s.image.w || p.y < 0 || p.y >= s.image.h)
      throw LabelError(label_path + ": line " + std::to_string(i + 1) + ": point (" +
                       std::to_string(p.x) + "," + std::to_string(p.y) + ") outside " +
                       std::to_string(s.image.w) + "x" + std::to_string(s.image.h) + " image");
  }
  if (!mask_path.empty()) {
    BinaryMask m = load_mask_pgm(mask_path);
    if (m.h != s.image.h || m.w != s.image.w)
      throw FormatError(mask_path + ": mask extents do not match image");
    s.mask = std::move(m);
  }
  return s;
}

// ---------------------------------------------------------------------------
// synthetic scenes

double portable_exp(double x) {
  // exp(x) = 2^k * exp(r), r = x - k ln2, |r| <= ln2/2; Taylor for exp(r).
  if (x < -700.0) return 0.0;
  if (x > 700.0) return std::numeric_limits<double>::infinity();
  constexpr double kLog2E = 1.4426950408889634;
  constexpr double kLn2Hi = 0.6931471805599453;
  const double kd = std::nearbyint(x * kLog2E);
  const double r = x - kd * kLn2Hi;
  double p = 1.0;
  for (int i = 14; i >= 1; --i) p = 1.0 + p * r / static_cast<double>(i);
  return std::ldexp(p, static_cast<int>(kd));
}

namespace {

// lattice value in [-1,1] from pure integer hashing
double lattice_val(uint64_t seed, int octave, int64_t gy, int64_t gx) {
  uint64_t hv = splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(octave + 1)));
  hv = splitmix64(hv ^ static_cast<uint64_t>(gy * 0x100000001b3LL));
  hv = splitmix64(hv ^ static_cast<uint64_t>(gx * 0x1000193LL));
  return static_cast<double>(hv >> 11) * 0x1.0p-52 - 1.0;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

Sample synth_scene(const SynthConfig& cfg, int64_t index, std::vector<float>* background_out) {
  if (cfg.targets_min < 0 || cfg.targets_max < cfg.targets_min)
    throw ConfigError("synth_scene: bad targets range");
  if (cfg.amp_max < cfg.amp_min || cfg.sigma_max < cfg.sigma_min || cfg.sigma_min <= 0)
    throw ConfigError("synth_scene: bad amplitude/sigma range");
  if (cfg.amp_max > 0.4 + 1e-9)
    throw ConfigError("synth_scene: amplitude above 0.4 can leave [0,1] over background");
  const int64_t H = cfg.image_h, W = cfg.image_w;
  const uint64_t scene_seed =
      splitmix64(cfg.seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(index + 1));
  Rng rng(scene_seed);

  Sample s;
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "synth_%06lld", static_cast<long long>(index));
  s.id = idbuf;
  s.image = GrayImage(H, W);

  // background: linear ramp + value-noise octaves + pixel noise, clamp [0,0.6]
  const double base = rng.uniform(0.1, 0.3);
  const double gx_coef = rng.uniform(-1.0, 1.0) * cfg.gradient_scale;
  const double gy_coef = rng.uniform(-1.0, 1.0) * cfg.gradient_scale;
  const uint64_t noise_seed = rng.next_u64();
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double v = base + gx_coef * (static_cast<double>(x) / static_cast<double>(W)) +
                 gy_coef * (static_cast<double>(y) / static_cast<double>(H));
      double amp = 0.08;
      double cell = 16.0;
      for (int o = 0; o < cfg.noise_octaves; ++o) {
        const double fy = static_cast<double>(y) / cell;
        const double fx = static_cast<double>(x) / cell;
        const int64_t y0 = static_cast<int64_t>(std::floor(fy));
        const int64_t x0 = static_cast<int64_t>(std::floor(fx));
        const double ty = smoothstep(fy - static_cast<double>(y0));
        const double tx = smoothstep(fx - static_cast<double>(x0));
        const double v00 = lattice_val(noise_seed, o, y0, x0);
        const double v01 = lattice_val(noise_seed, o, y0, x0 + 1);
        const double v10 = lattice_val(noise_seed, o, y0 + 1, x0);
        const double v11 = lattice_val(noise_seed, o, y0 + 1, x0 + 1);
        v += amp * ((1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11));
        amp *= 0.5;
        cell *= 0.5;
      }
      v += cfg.noise_std * rng.normal_ih();
      s.image.at(y, x) = static_cast<float>(std::min(0.6, std::max(0.0, v)));
    }
  if (background_out) *background_out = s.image.v;

  // targets: separated centers, additive Gaussian blobs
  const int count =
      cfg.targets_min +
      static_cast<int>(rng.below(static_cast<uint64_t>(cfg.targets_max - cfg.targets_min + 1)));
  for (int t = 0; t < count; ++t) {
    PointLabel c;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      c.x = static_cast<int>(rng.below(static_cast<uint64_t>(W)));
      c.y = static_cast<int>(rng.below(static_cast<uint64_t>(H)));
      placed = true;
      for (const PointLabel& other : s.labels) {
        const int64_t dx = c.x - other.x, dy = c.y - other.y;
        if (dx * dx + dy * dy < 36) {  // centers at least 6 px apart
          placed = false;
          break;
        }
      }
    }
    if (!placed)
      throw ConfigError("synth_scene: cannot place " + std::to_string(count) +
                        " separated targets on " + std::to_string(W) + "x" + std::to_string(H));
    const double amp = rng.uniform(cfg.amp_min, cfg.amp_max);
    const double sigma = rng.uniform(cfg.sigma_min, cfg.sigma_max);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const int64_t rad = static_cast<int64_t>(std::ceil(4.0 * sigma));
    for (int64_t y = std::max<int64_t>(0, c.y - rad); y <= std::min<int64_t>(H - 1, c.y + rad); ++y)
      for (int64_t x = std::max<int64_t>(0, c.x - rad); x <= std::min<int64_t>(W - 1, c.x + rad);
           ++x) {
        const double d2 = static_cast<double>((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y));
        s.image.at(y, x) += static_cast<float>(amp * portable_exp(-d2 * inv));
      }
    s.labels.push_back(c);
  }
  for (auto& v : s.image.v) v = std::min(1.0f, std::max(0.0f, v));
  return s;
}

// ---------------------------------------------------------------------------

SplitManifest make_split(const std::vector<std::string>& ids, uint64_t seed, double train_frac,
                         double val_frac) {
  std::vector<std::string> shuffled = ids;
  Rng rng(splitmix64(seed ^ 0x5157ab1eULL));
  // Fisher-Yates
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[static_cast<size_t>(rng.below(i))]);
  SplitManifest m;
  const size_t n = shuffled.size();
  const size_t ntrain = static_cast<size_t>(static_cast<double>(n) * train_frac + 0.5);
  const size_t nval = static_cast<size_t>(static_cast<double>(n) * val_frac + 0.5);
  for (size_t i = 0; i < n; ++i) {
    if (i < ntrain)
      m.train.push_back(shuffled[i]);
    else if (i < ntrain + nval)
      m.val.push_back(shuffled[i]);
    else
      m.test.push_back(shuffled[i]);
  }
  return m;
}

void save_split(const std::string& path, const SplitManifest& m) {
  nlohmann::json j;
  j["train"] = m.train;
  j["val"] = m.val;
  j["test"] = m.test;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

SplitManifest load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw FormatError(path + ": bad JSON: " + e.what());
  }
  SplitManifest m;
  for (const char* key : {"train", "val", "test"})
    if (!j.contains(key) || !j[key].is_array())
      throw FormatError(path + ": missing array field \"" + key + "\"");
  m.train = j["train"].get<std::vector<std::string>>();
  m.val = j["val"].get<std::vector<std::string>>();
  m.test = j["test"].get<std::vector<std::string>>();
  return m;
}

// ---------------------------------------------------------------------------
// checkpoint codec

namespace {

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v & 0xff));
  b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_f32(std::vector<uint8_t>& b, float v) { put_u32(b, std::bit_cast<uint32_t>(v)); }

struct Reader {
  const std::vector<uint8_t>& b;
  size_t pos = 0;
  void need(size_t n, const char* field) {
    if (b.size() - pos < n)
      throw CheckpointError(std::string("checkpoint truncated while reading ") + field);
  }
  uint16_t u16(const char* field) {
    need(2, field);
    const uint16_t v = static_cast<uint16_t>(b[pos] | (b[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32(const char* field) {
    need(4, field);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + static_cast<size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  uint8_t u8(const char* field) {
    need(1, field);
    return b[pos++];
  }
};

}  // namespace

void checkpoint_save(const NamedTensors& table, const std::string& path) {
  std::vector<uint8_t> bytes;
  bytes.push_back('S');
  bytes.push_back('S');
  bytes.push_back('H');
  bytes.push_back('D');
  put_u32(bytes, 1u);  // format version
  put_u32(bytes, static_cast<uint32_t>(table.size()));
  for (const auto& [name, tensor] : table) {
    if (name.empty() || name.size() > 0xffff)
      throw UsageError("checkpoint_save: bad tensor name \"" + name + "\"");
    put_u16(bytes, static_cast<uint16_t>(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    bytes.push_back(static_cast<uint8_t>(tensor.rank()));
    for (int64_t a = 0; a < tensor.rank(); ++a)
      put_u32(bytes, static_cast<uint32_t>(tensor.extent(a)));
    for (int64_t i = 0; i < tensor.numel(); ++i) put_f32(bytes, tensor[i]);
  }
  write_file(path, bytes);
}

NamedTensors checkpoint_load(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  Reader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "SSHD", 4) != 0)
    throw CheckpointError(path + ": bad magic (want \"SSHD\")");
  r.pos = 4;
  const uint32_t version = r.u32("version");
  if (version != 1) throw CheckpointError(path + ": unsupported version " + std::to_string(version));
  const uint32_t count = r.u32("tensor count");
  NamedTensors out;
  out.reserve(count);
  for (uint32_t t = 0; t < count; ++t) {
    const uint16_t name_len = r.u16("name length");
    r.need(name_len, "name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
    r.pos += name_len;
    const uint8_t rank = r.u8("rank");
    if (rank == 0 || rank > 8) throw CheckpointError(path + ": bad rank for \"" + name + "\"");
    Shape shape;
    int64_t numel = 1;
    for (uint8_t a = 0; a < rank; ++a) {
      const uint32_t e = r.u32("extent");
      if (e == 0) throw CheckpointError(path + ": zero extent for \"" + name + "\"");
      shape.push_back(e);
      numel *= e;
    }
    r.need(static_cast<size_t>(numel) * 4, "tensor data");
    Tensor<float> tensor(shape);
    for (int64_t i = 0; i < numel; ++i) {
      uint32_t raw = 0;
      for (int k = 0; k < 4; ++k)
        raw |= static_cast<uint32_t>(bytes[r.pos + static_cast<size_t>(4 * i + k)]) << (8 * k);
      tensor[i] = std::bit_cast<float>(raw);
    }
    r.pos += static_cast<size_t>(numel) * 4;
    out.emplace_back(std::move(name), std::move(tensor));
  }
  if (r.pos != bytes.size())
    throw CheckpointError(path + ": " + std::to_string(bytes.size() - r.pos) +
                          " trailing bytes after table");
  return out;
}

// ---------------------------------------------------------------------------

void dump_heatmap(const Heatmap& hm, const std::string& path, HeatmapDumpKind kind) {
  if (kind == HeatmapDumpKind::pgm) {
    GrayImage img(hm.h, hm.w);
    img.v = hm.v;
    save_pgm(path, img, 8);
    return;
  }
  std::vector<uint8_t> bytes;
  put_u32(bytes, static_cast<uint32_t>(hm.h));
  put_u32(bytes, static_cast<uint32_t>(hm.w));
  for (const float f : hm.v) put_f32(bytes, f);
  write_file(path, bytes);
}

Heatmap load_raw_heatmap(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  Reader r{bytes};
  const uint32_t h = r.u32("height");
  const uint32_t w = r.u32("width");
  if (h == 0 || w == 0) throw FormatError(path + ": zero heatmap extent");
  r.need(static_cast<size_t>(h) * w * 4, "heatmap data");
  Heatmap hm(h, w);
  for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) {
    uint32_t raw = 0;
    for (int k = 0; k < 4; ++k) raw |= static_cast<uint32_t>(bytes[r.pos + 4 * i + static_cast<size_t>(k)]) << (8 * k);
    hm.v[i] = std::bit_cast<float>(raw);
  }
  return hm;
}

// ---------------------------------------------------------------------------

Sample flip_horizontal(const Sample& s) {
  Sample out = s;
  const int64_t H = s.image.h, W = s.image.w;
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) out.image.at(y, x) = s.image.at(y, W - 1 - x);
  for (auto& p : out.labels) p.x = static_cast<int>(W) - 1 - p.x;
  if (s.mask) {
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) out.mask->at(y, x) = s.mask->at(y, W - 1 - x);
  }
  return out;
}

Sample flip_vertical(const Sample& s) {
  Sample out = s;
  const int64_t H = s.image.h, W = s.image.w;
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) out.image.at(y, x) = s.image.at(H - 1 - y, x);
  for (auto& p : out.labels) p.y = static_cast<int>(H) - 1 - p.y;
  if (s.mask) {
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) out.mask->at(y, x) = s.mask->at(H - 1 - y, x);
  }
  return out;
}

}  // namespace sshd
