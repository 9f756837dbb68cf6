#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "igram/net.hpp"
#include "igram/tokenizer.hpp"
#include "igram/types.hpp"

namespace igram {

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kDefaultTemperature = 0.1;
inline constexpr int kDefaultWindow = 32;

// exp(-(1 - cos) / T), clamped into (0, 1].
inline double similarity_from_cosine(double cosine, double temperature = kDefaultTemperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  cosine = std::clamp(cosine, -1.0, 1.0);
  const double s = std::exp(-(1.0 - cosine) / temperature);
  return std::max(s, std::numeric_limits<double>::min());
}

template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("embedding dimensions differ");
  const auto ad = a.template cast<double>().eval();
  const auto bd = b.template cast<double>().eval();
  const double na = ad.squaredNorm();
  const double nb = bd.squaredNorm();
  if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("zero embedding vector");
  if (ad == bd) return 1.0;
  return ad.dot(bd) / std::sqrt(na * nb);
}

// Fuzzy-match similarity of two window embeddings. Exactly 1 for equal vectors.
template <typename DerivedA, typename DerivedB>
double similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                  double temperature = kDefaultTemperature) {
  return similarity_from_cosine(cosine(a, b), temperature);
}

// Maps a token window to a fixed-dimension, nonzero, finite vector.
// Implementations must be deterministic and safe to call from several threads.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual int window_len() const = 0;
  virtual int dim() const = 0;
  virtual double temperature() const { return kDefaultTemperature; }
  // Whether windows shorter than window_len() can be embedded.
  virtual bool accepts(std::size_t len) const { return len == static_cast<std::size_t>(window_len()); }
  virtual Embedding<float> embed(TokenSpan window) const = 0;
};

// Training-free provider: recency-weighted sum of seeded per-(token, offset)
// sign vectors, plus a small length-dependent term so the result is never zero.
class BaselineEmbedder final : public EmbeddingProvider {
 public:
  struct Options {
    int window = kDefaultWindow;
    int dim = 256;
    double decay = 0.9;
    double temperature = kDefaultTemperature;
    std::uint64_t seed = 0x1d2c3b4a5968u;
  };

  BaselineEmbedder();
  explicit BaselineEmbedder(Options options);

  int window_len() const override { return opt_.window; }
  int dim() const override { return opt_.dim; }
  double temperature() const override { return opt_.temperature; }
  bool accepts(std::size_t len) const override { return len >= 1; }
  Embedding<float> embed(TokenSpan window) const override;

  const Options& options() const { return opt_; }

 private:
  Options opt_;
};

// Free-function form of the baseline embedder.
Embedding<float> baseline_embed(TokenSpan window, int dim, double decay,
                                std::uint64_t seed = BaselineEmbedder::Options{}.seed);

// FMEB embedding tables (little-endian):
//   "FMEB" | u32 version=1 | u32 dim | u32 k | f32 T | u64 count |
//   u64 stream offset of the first window's end | count*dim f32
struct EmbeddingTable {
  int dim = 0;
  int window = 0;
  float temperature = static_cast<float>(kDefaultTemperature);
  std::uint64_t first_end = 0;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic> vectors;  // dim x count

  std::uint64_t count() const { return static_cast<std::uint64_t>(vectors.cols()); }
};

void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embedding_table(const std::filesystem::path& path);

// Serves vectors from an exported table. Windows are resolved by content
// against the stream the table was exported from; unknown windows throw.
class TableProvider final : public EmbeddingProvider {
 public:
  TableProvider(EmbeddingTable table, const TokenSequence& stream);
  static std::unique_ptr<TableProvider> open(const std::filesystem::path& table_path,
                                             const std::filesystem::path& stream_path);

  int window_len() const override { return table_.window; }
  int dim() const override { return table_.dim; }
  double temperature() const override { return table_.temperature; }
  Embedding<float> embed(TokenSpan window) const override;

  Embedding<float> at_position(std::uint64_t end_position) const;

 private:
  struct WindowHash {
    std::size_t operator()(const std::vector<TokenId>& w) const noexcept;
  };

  EmbeddingTable table_;
  std::unordered_map<std::vector<TokenId>, std::uint64_t, WindowHash> by_window_;
};

// Client for the binary provider protocol:
//   handshake  "FMPv1" | u32 dim | u32 k | f32 T
//   request    u32 k | k u32 token ids
//   response   dim f32, or error frame 0xFFFFFFFF | 8-byte ASCII code
// Requests on one connection are serialized.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(const std::string& endpoint);

  int window_len() const override { return window_; }
  int dim() const override { return dim_; }
  double temperature() const override { return temperature_; }
  Embedding<float> embed(TokenSpan window) const override;

 private:
  mutable std::mutex mu_;
  mutable net::Socket socket_;
  int dim_ = 0;
  int window_ = 0;
  double temperature_ = kDefaultTemperature;
};

// Server side of the provider protocol for one connection; returns when the
// peer disconnects. Used to bridge any in-process provider onto the wire.
void serve_provider_connection(const EmbeddingProvider& provider, net::Socket& socket);

// "baseline", "table:<path>" (needs `table_stream`) or "remote:<host:port>".
std::shared_ptr<const EmbeddingProvider> make_provider(const std::string& spec,
                                                       const BaselineEmbedder::Options& baseline,
                                                       const std::filesystem::path& table_stream = {});

}  // namespace igram
