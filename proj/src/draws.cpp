#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "phylocorr/model.hpp"
#include "phylocorr/sampler.hpp"

namespace phylocorr {

std::size_t Draws::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  for (std::size_t i = 0; i < diag_names.size(); ++i)
    if (diag_names[i] == name) return names.size() + i;
  throw std::out_of_range("no column named '" + name + "' in draws");
}

std::vector<double> Draws::chain_column(int chain, std::size_t col) const {
  std::vector<double> out(static_cast<std::size_t>(iterations));
  for (int t = 0; t < iterations; ++t) out[static_cast<std::size_t>(t)] = at(chain, t, col);
  return out;
}

std::vector<double> Draws::column(std::size_t col) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(chains) * static_cast<std::size_t>(iterations));
  for (int c = 0; c < chains; ++c)
    for (int t = 0; t < iterations; ++t) out.push_back(at(c, t, col));
  return out;
}

std::vector<double> Draws::draw(int chain, int iter) const {
  std::vector<double> out(names.size());
  for (std::size_t k = 0; k < names.size(); ++k) out[k] = at(chain, iter, k);
  return out;
}

long Draws::divergent_count() const {
  const auto it = std::find(diag_names.begin(), diag_names.end(), "divergent__");
  if (it == diag_names.end()) return 0;
  const std::size_t col = names.size() + static_cast<std::size_t>(it - diag_names.begin());
  long n = 0;
  for (double v : column(col)) n += v != 0.0;
  return n;
}

long Draws::max_depth_hits(int max_depth) const {
  const auto it = std::find(diag_names.begin(), diag_names.end(), "treedepth__");
  if (it == diag_names.end()) return 0;
  const std::size_t col = names.size() + static_cast<std::size_t>(it - diag_names.begin());
  long n = 0;
  for (double v : column(col)) n += v >= max_depth;
  return n;
}

Draws sample(const ModelSpec& spec, const ModelData& data, const SamplerConfig& config) {
  config.validate();
  const Posterior post(spec, data);
  return sample(post, config);
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, s_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out(s_.substr(pos_, n));
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return s_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw std::runtime_error("truncated draws file");
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string draws_to_binary(const Draws& d) {
  std::string out = "PHYD";
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.chains));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.iterations));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.names.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.diag_names.size()));
  auto name = [&](const std::string& s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
  };
  for (const auto& s : d.names) name(s);
  for (const auto& s : d.diag_names) name(s);
  out.reserve(out.size() + 8 * d.values.size());
  for (double v : d.values) put_le<double>(out, v);
  return out;
}

Draws draws_from_binary(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "PHYD") throw std::runtime_error("not a draws file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != 1) throw std::runtime_error("unsupported draws version " + std::to_string(version));
  Draws d;
  d.chains = static_cast<int>(r.get<std::uint32_t>());
  d.iterations = static_cast<int>(r.get<std::uint32_t>());
  const auto np = r.get<std::uint32_t>();
  const auto nd = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < np + nd; ++i) {
    const auto len = r.get<std::uint32_t>();
    (i < np ? d.names : d.diag_names).push_back(r.bytes(len));
  }
  const std::size_t n = static_cast<std::size_t>(d.chains) * static_cast<std::size_t>(d.iterations) *
                        d.columns();
  if (r.remaining() != 8 * n) throw std::runtime_error("draws payload size does not match header");
  d.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.values[i] = r.get<double>();
  return d;
}

void write_draws_binary(const std::string& path, const Draws& d) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const std::string b = draws_to_binary(d);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

Draws read_draws_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  const std::string b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return draws_from_binary(b);
}

std::string draws_to_csv(const Draws& d) {
  std::ostringstream os;
  os.precision(17);
  auto quoted = [](const std::string& n) {
    std::string q = "\"";
    for (char ch : n) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  os << "chain,iteration";
  for (const auto& n : d.names) os << ',' << quoted(n);
  for (const auto& n : d.diag_names) os << ',' << n;
  os << '\n';
  for (int c = 0; c < d.chains; ++c)
    for (int t = 0; t < d.iterations; ++t) {
      os << c + 1 << ',' << t + 1;
      for (std::size_t k = 0; k < d.columns(); ++k) os << ',' << d.at(c, t, k);
      os << '\n';
    }
  return os.str();
}

}  // namespace phylocorr
