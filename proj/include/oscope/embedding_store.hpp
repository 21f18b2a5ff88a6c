#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace oscope {

enum class Modality : std::uint8_t { Text = 0, Image = 1 };
enum class StoreFormat { Binary, Jsonl };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Ordered id -> float vector collection produced by one encoder.
///
/// Records keep insertion order; ids are unique UTF-8 strings of at most
/// 65,535 bytes. Once built, a store is only read, so it can be shared
/// across threads freely.
class EmbeddingStore {
public:
    static constexpr std::size_t kMaxIdBytes = 65535;

    EmbeddingStore(std::string model_id, Modality modality, std::size_t dim, bool normalized = false);

    /// Appends a record. Throws DimError on length mismatch, DuplicateIdError on
    /// a repeated id, ValueError on a non-finite component or oversized id.
    void add(std::string id, std::span<const float> vec);
    void add(std::string id, std::span<const double> vec);

    void reserve(std::size_t n);

    const std::string& model_id() const noexcept { return model_id_; }
    Modality modality() const noexcept { return modality_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    bool normalized() const noexcept { return normalized_; }

    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::string& id(std::size_t i) const { return ids_.at(i); }
    std::span<const float> vector(std::size_t i) const;

    std::optional<std::size_t> find(std::string_view id) const;
    /// Vector for `id`; KeyError if absent.
    std::span<const float> at(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id).has_value(); }

    /// Row-major dim*size floats.
    std::span<const float> data() const noexcept { return values_; }

    friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

private:
    friend EmbeddingStore normalize(const EmbeddingStore& store);

    std::string model_id_;
    Modality modality_;
    std::size_t dim_;
    bool normalized_;
    std::vector<std::string> ids_;
    std::vector<float> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Reads a binary (`EMBS` magic) or JSONL store, detected from the first byte.
EmbeddingStore load_store(const std::filesystem::path& path);
void save_store(const EmbeddingStore& store, const std::filesystem::path& path,
                StoreFormat format = StoreFormat::Binary);

/// In-memory codec for the binary layout (used by save/load and the bindings).
std::string encode_binary(const EmbeddingStore& store);
EmbeddingStore decode_binary(std::string_view bytes);

/// Unit-L2 copy with normalized=true. A store already flagged normalized is
/// returned unchanged. ValueError names the first zero vector.
EmbeddingStore normalize(const EmbeddingStore& store);

/// Dense |queries| x |gallery| cosine matrix, row-major.
struct SimilarityMatrix {
    std::vector<std::string> query_ids;
    std::vector<std::string> gallery_ids;
    std::vector<double> values;

    std::size_t rows() const noexcept { return query_ids.size(); }
    std::size_t cols() const noexcept { return gallery_ids.size(); }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
};

/// Cosine of every query against every gallery vector, using L2-normalized
/// double copies. Rows are computed independently with sequential accumulation,
/// so the result does not depend on the worker count. DimError on mismatch.
SimilarityMatrix cosine_matrix(const EmbeddingStore& queries, const EmbeddingStore& gallery);

/// Row-major double matrix of unit vectors (one row per record).
std::vector<double> unit_rows(const EmbeddingStore& store);

double dot(std::span<const double> a, std::span<const double> b);
/// Cosine of two raw vectors; 0 if either is zero.
double cosine(std::span<const float> a, std::span<const float> b);
/// Unit-L2 copy; ValueError for a zero vector.
std::vector<double> normalized_copy(std::span<const double> v);

}  // namespace oscope
