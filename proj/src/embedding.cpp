#include "igram/embedding.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "igram/binary_io.hpp"

namespace igram {
namespace {

constexpr std::uint32_t kTableVersion = 1;
constexpr std::uint32_t kErrorMarker = 0xFFFFFFFFu;
constexpr double kLengthTermScale = 1e-3;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Adds scale * h(key) to `acc`, where h is a seeded ±1 vector.
void add_sign_vector(Embedding<double>& acc, std::uint64_t key, double scale) {
  const auto dim = acc.size();
  for (Eigen::Index block = 0; block * 64 < dim; ++block) {
    const std::uint64_t bits = splitmix64(key + static_cast<std::uint64_t>(block) * 0xd1b54a32d192ed03ull);
    const auto end = std::min<Eigen::Index>(dim, (block + 1) * 64);
    for (auto c = block * 64; c < end; ++c) {
      acc[c] += ((bits >> (c - block * 64)) & 1u) ? scale : -scale;
    }
  }
}

std::uint64_t token_key(std::uint64_t seed, TokenId token, std::size_t offset) {
  return splitmix64(seed ^ splitmix64(token) ^ splitmix64(0xa0761d6478bd642full + offset));
}

std::uint64_t length_key(std::uint64_t seed, std::size_t len) {
  return splitmix64(~seed ^ splitmix64(0xe7037ed1a0b428dbull ^ len));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f32(std::vector<unsigned char>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

}  // namespace

Embedding<float> baseline_embed(TokenSpan window, int dim, double decay, std::uint64_t seed) {
  if (window.empty()) throw std::invalid_argument("cannot embed an empty window");
  if (dim < 1) throw std::invalid_argument("embedding dimension must be positive");
  Embedding<double> acc = Embedding<double>::Zero(dim);
  const std::size_t k = window.size();
  double weight = 1.0;
  for (std::size_t back = 0; back < k; ++back) {
    const std::size_t i = k - 1 - back;  // 0 = oldest
    add_sign_vector(acc, token_key(seed, window[i], i), weight);
    weight *= decay;
  }
  add_sign_vector(acc, length_key(seed, k), kLengthTermScale);
  if (acc.squaredNorm() == 0.0) acc[0] = kLengthTermScale;
  return acc.cast<float>();
}

BaselineEmbedder::BaselineEmbedder() : BaselineEmbedder(Options{}) {}

BaselineEmbedder::BaselineEmbedder(Options options) : opt_(options) {
  if (opt_.window < 1) throw std::invalid_argument("window must be at least 1");
  if (opt_.dim < 1) throw std::invalid_argument("dimension must be at least 1");
  if (!(opt_.decay > 0.0 && opt_.decay <= 1.0)) throw std::invalid_argument("decay must be in (0, 1]");
  if (!(opt_.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

Embedding<float> BaselineEmbedder::embed(TokenSpan window) const {
  return baseline_embed(window, opt_.dim, opt_.decay, opt_.seed);
}

void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  if (table.vectors.rows() != table.dim) throw std::invalid_argument("table rows must equal dim");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("FMEB", 4);
  put_le<std::uint32_t>(out, kTableVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.window));
  put_le_f32(out, table.temperature);
  put_le<std::uint64_t>(out, table.count());
  put_le<std::uint64_t>(out, table.first_end);
  for (Eigen::Index c = 0; c < table.vectors.cols(); ++c) {
    for (Eigen::Index r = 0; r < table.vectors.rows(); ++r) put_le_f32(out, table.vectors(r, c));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

EmbeddingTable read_embedding_table(const std::filesystem::path& path) {
  MappedFile file(path);
  ByteCursor cur(file.bytes());
  cur.expect_magic("FMEB");
  const auto version_at = cur.offset();
  if (auto v = cur.read(4); v != kTableVersion) {
    throw FormatError("unsupported embedding table version " + std::to_string(v), version_at);
  }
  EmbeddingTable t;
  const auto dim_at = cur.offset();
  t.dim = static_cast<int>(cur.read(4));
  if (t.dim < 1) throw FormatError("embedding dimension is zero", dim_at);
  const auto k_at = cur.offset();
  t.window = static_cast<int>(cur.read(4));
  if (t.window < 1) throw FormatError("window length is zero", k_at);
  const auto t_at = cur.offset();
  t.temperature = cur.read_f32();
  if (!(t.temperature > 0.0f)) throw FormatError("temperature must be positive", t_at);
  const auto count = cur.read(8);
  t.first_end = cur.read(8);
  if (count > cur.remaining() / (4ull * t.dim)) throw FormatError("truncated embedding table", cur.offset());
  t.vectors.resize(t.dim, static_cast<Eigen::Index>(count));
  for (std::uint64_t c = 0; c < count; ++c) {
    for (int r = 0; r < t.dim; ++r) t.vectors(r, static_cast<Eigen::Index>(c)) = cur.read_f32();
  }
  if (cur.remaining() != 0) throw FormatError("trailing bytes after embedding table", cur.offset());
  return t;
}

std::size_t TableProvider::WindowHash::operator()(const std::vector<TokenId>& w) const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ull;
  for (TokenId t : w) h = splitmix64(h ^ t);
  return static_cast<std::size_t>(h);
}

TableProvider::TableProvider(EmbeddingTable table, const TokenSequence& stream)
    : table_(std::move(table)) {
  const auto k = static_cast<std::uint64_t>(table_.window);
  if (table_.first_end + 1 < k) throw std::invalid_argument("first window would start before the stream");
  if (table_.count() > 0 && table_.first_end + table_.count() > stream.size()) {
    throw std::invalid_argument("embedding table extends past the end of its stream");
  }
  const auto tokens = stream.view();
  for (std::uint64_t c = 0; c < table_.count(); ++c) {
    const auto end = table_.first_end + c;
    auto w = tokens.subspan(end + 1 - k, k);
    by_window_.try_emplace(std::vector<TokenId>(w.begin(), w.end()), c);
  }
}

std::unique_ptr<TableProvider> TableProvider::open(const std::filesystem::path& table_path,
                                                   const std::filesystem::path& stream_path) {
  return std::make_unique<TableProvider>(read_embedding_table(table_path), load_token_stream(stream_path));
}

Embedding<float> TableProvider::embed(TokenSpan window) const {
  if (window.size() != static_cast<std::size_t>(table_.window)) {
    throw std::invalid_argument("table provider serves windows of exactly " +
                                std::to_string(table_.window) + " tokens");
  }
  auto it = by_window_.find(std::vector<TokenId>(window.begin(), window.end()));
  if (it == by_window_.end()) throw std::out_of_range("window not present in embedding table");
  return table_.vectors.col(static_cast<Eigen::Index>(it->second));
}

Embedding<float> TableProvider::at_position(std::uint64_t end_position) const {
  if (end_position < table_.first_end || end_position - table_.first_end >= table_.count()) {
    throw std::out_of_range("no table entry ends at position " + std::to_string(end_position));
  }
  return table_.vectors.col(static_cast<Eigen::Index>(end_position - table_.first_end));
}

RemoteProvider::RemoteProvider(const std::string& endpoint) : socket_(net::Socket::connect(endpoint)) {
  unsigned char hs[17];
  socket_.read_exact(hs);
  if (std::memcmp(hs, "FMPv1", 5) != 0) throw RemoteError("bad provider handshake from " + endpoint);
  dim_ = static_cast<int>(get_le(hs + 5, 4));
  window_ = static_cast<int>(get_le(hs + 9, 4));
  temperature_ = get_le_f32(hs + 13);
  if (dim_ < 1 || window_ < 1 || !(temperature_ > 0.0)) {
    throw RemoteError("provider advertised invalid parameters");
  }
}

Embedding<float> RemoteProvider::embed(TokenSpan window) const {
  std::vector<unsigned char> req;
  req.reserve(4 + 4 * window.size());
  put_u32(req, static_cast<std::uint32_t>(window.size()));
  for (TokenId t : window) put_u32(req, t);

  std::lock_guard lock(mu_);
  socket_.write_all(req);
  unsigned char head[4];
  socket_.read_exact(head);
  if (get_le(head, 4) == kErrorMarker) {
    char code[8];
    socket_.read_exact({reinterpret_cast<unsigned char*>(code), 8});
    throw RemoteError("provider error " + std::string(code, 8));
  }
  std::vector<unsigned char> body(4ull * (dim_ - 1));
  socket_.read_exact(body);
  Embedding<float> v(dim_);
  v[0] = get_le_f32(head);
  for (int i = 1; i < dim_; ++i) v[i] = get_le_f32(body.data() + 4 * (i - 1));
  return v;
}

void serve_provider_connection(const EmbeddingProvider& provider, net::Socket& socket) {
  std::vector<unsigned char> hs{'F', 'M', 'P', 'v', '1'};
  put_u32(hs, static_cast<std::uint32_t>(provider.dim()));
  put_u32(hs, static_cast<std::uint32_t>(provider.window_len()));
  put_f32(hs, static_cast<float>(provider.temperature()));
  socket.write_all(hs);

  auto send_error = [&](const char (&code)[9]) {
    std::vector<unsigned char> frame;
    put_u32(frame, kErrorMarker);
    frame.insert(frame.end(), code, code + 8);
    socket.write_all(frame);
  };

  for (;;) {
    unsigned char head[4];
    try {
      socket.read_exact(head);
    } catch (const RemoteError&) {
      return;  // peer hung up
    }
    const auto k = get_le(head, 4);
    if (k > (1u << 20)) {
      send_error("EFRAME  ");
      return;
    }
    std::vector<unsigned char> body(4 * k);
    socket.read_exact(body);
    if (k != static_cast<std::uint64_t>(provider.window_len())) {
      send_error("EWINLEN ");
      continue;
    }
    std::vector<TokenId> window(k);
    for (std::uint64_t i = 0; i < k; ++i) window[i] = static_cast<TokenId>(get_le(body.data() + 4 * i, 4));
    Embedding<float> v;
    try {
      v = provider.embed(window);
    } catch (const std::exception&) {
      send_error("EEMBED  ");
      continue;
    }
    std::vector<unsigned char> resp;
    resp.reserve(4 * v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f32(resp, v[i]);
    socket.write_all(resp);
  }
}

std::shared_ptr<const EmbeddingProvider> make_provider(const std::string& spec,
                                                       const BaselineEmbedder::Options& baseline,
                                                       const std::filesystem::path& table_stream) {
  if (spec == "baseline") return std::make_shared<BaselineEmbedder>(baseline);
  if (spec.rfind("table:", 0) == 0) {
    if (table_stream.empty()) throw std::invalid_argument("table provider needs the stream it was exported from");
    return TableProvider::open(spec.substr(6), table_stream);
  }
  if (spec.rfind("remote:", 0) == 0) return std::make_shared<RemoteProvider>(spec.substr(7));
  throw std::invalid_argument("unknown provider \"" + spec + "\" (expected baseline, table:<path> or remote:<host:port>)");
}

}  // namespace igram
