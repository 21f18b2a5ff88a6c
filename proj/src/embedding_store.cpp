#include "oscope/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "oscope/errors.hpp"
#include "oscope/io.hpp"
#include "oscope/parallel.hpp"

namespace oscope {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', 'S'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kFlagNormalized = 0x01;
constexpr double kUnitTolerance = 1e-6;

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float f) { le(std::bit_cast<std::uint32_t>(f)); }
    void str16(std::string_view s) {
        le(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view in) : in_(in) {}

    void need(std::size_t n, const char* what) const {
        if (in_.size() - pos_ < n)
            throw CorruptError(std::string("truncated store: ") + what + " at byte " + std::to_string(pos_));
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    template <typename T>
    T le(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<std::uint8_t>(in_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }
    std::string str16(const char* what) {
        auto n = le<std::uint16_t>(what);
        need(n, what);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
    std::size_t remaining() const { return in_.size() - pos_; }
    std::size_t pos() const { return pos_; }

private:
    std::string_view in_;
    std::size_t pos_ = 0;
};

double norm_of(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

void check_unit(const EmbeddingStore& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        double n = norm_of(s.vector(i));
        if (std::abs(n - 1.0) > kUnitTolerance)
            throw ValueError("store flagged normalized but '" + s.id(i) + "' has norm " + std::to_string(n));
    }
}

EmbeddingStore load_jsonl(const std::filesystem::path& path) {
    std::optional<EmbeddingStore> store;
    for_each_jsonl(path, [&](std::size_t line, const Json& j) {
        const std::string where = path.string() + ": line " + std::to_string(line);
        if (!store) {
            if (!j.is_object() || !j.contains("embs") || j.at("embs") != 1)
                throw FormatError(where + ": expected header {\"embs\":1,...}");
            try {
                auto dim = j.at("dim").get<std::int64_t>();
                if (dim < 1) throw FormatError(where + ": dim must be >= 1");
                store.emplace(j.at("model_id").get<std::string>(),
                              modality_from_string(j.at("modality").get<std::string>()),
                              static_cast<std::size_t>(dim), j.at("normalized").get<bool>());
            } catch (const Json::exception& e) {
                throw FormatError(where + ": bad header: " + e.what());
            }
            return;
        }
        std::string id;
        std::vector<double> vec;
        try {
            id = j.at("id").get<std::string>();
            const auto& arr = j.at("vec");
            if (!arr.is_array()) throw CorruptError(where + ": vec is not an array");
            vec.reserve(arr.size());
            for (const auto& x : arr) {
                if (x.is_null()) throw ValueError(where + ": non-finite component");
                vec.push_back(x.get<double>());
            }
        } catch (const Json::exception& e) {
            throw CorruptError(where + ": " + e.what());
        }
        if (vec.size() != store->dim())
            throw CorruptError(where + ": vector has " + std::to_string(vec.size()) + " components, expected " +
                               std::to_string(store->dim()));
        std::vector<float> f(vec.begin(), vec.end());
        try {
            store->add(std::move(id), std::span<const float>(f));
        } catch (const ValueError& e) {
            throw ValueError(where + ": " + e.what());
        }
    });
    if (!store) throw FormatError(path.string() + ": empty file, missing header");
    if (store->normalized()) check_unit(*store);
    return std::move(*store);
}

std::string encode_jsonl(const EmbeddingStore& s) {
    std::string out = jsonl_line(Json{{"embs", 1},
                                      {"dim", s.dim()},
                                      {"modality", to_string(s.modality())},
                                      {"model_id", s.model_id()},
                                      {"normalized", s.normalized()}});
    for (std::size_t i = 0; i < s.size(); ++i) {
        Json vec = Json::array();
        for (float x : s.vector(i)) vec.push_back(static_cast<double>(x));
        out += jsonl_line(Json{{"id", s.id(i)}, {"vec", std::move(vec)}});
    }
    return out;
}

}  // namespace

std::string_view to_string(Modality m) { return m == Modality::Text ? "text" : "image"; }

Modality modality_from_string(std::string_view s) {
    if (s == "text") return Modality::Text;
    if (s == "image") return Modality::Image;
    throw ValueError("unknown modality '" + std::string(s) + "'");
}

EmbeddingStore::EmbeddingStore(std::string model_id, Modality modality, std::size_t dim, bool normalized)
    : model_id_(std::move(model_id)), modality_(modality), dim_(dim), normalized_(normalized) {
    if (dim_ == 0) throw ValueError("dim must be >= 1");
    if (dim_ > 0xffffffffULL) throw ValueError("dim does not fit in u32");
    if (model_id_.size() > kMaxIdBytes) throw ValueError("model id longer than 65535 bytes");
}

void EmbeddingStore::add(std::string id, std::span<const float> vec) {
    if (vec.size() != dim_)
        throw DimError("record '" + id + "' has " + std::to_string(vec.size()) + " components, store dim is " +
                       std::to_string(dim_));
    if (id.size() > kMaxIdBytes) throw ValueError("id longer than 65535 bytes");
    for (float x : vec)
        if (!std::isfinite(x)) throw ValueError("record '" + id + "' has a non-finite component");
    if (index_.contains(id)) throw DuplicateIdError("duplicate id '" + id + "'");
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    values_.insert(values_.end(), vec.begin(), vec.end());
}

void EmbeddingStore::add(std::string id, std::span<const double> vec) {
    std::vector<float> f(vec.begin(), vec.end());
    add(std::move(id), std::span<const float>(f));
}

void EmbeddingStore::reserve(std::size_t n) {
    ids_.reserve(n);
    values_.reserve(n * dim_);
    index_.reserve(n);
}

std::span<const float> EmbeddingStore::vector(std::size_t i) const {
    if (i >= ids_.size()) throw IndexError("record index " + std::to_string(i) + " out of range");
    return std::span<const float>(values_).subspan(i * dim_, dim_);
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::span<const float> EmbeddingStore::at(std::string_view id) const {
    auto i = find(id);
    if (!i) throw KeyError("id '" + std::string(id) + "' not in store '" + model_id_ + "'");
    return vector(*i);
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    if (a.model_id_ != b.model_id_ || a.modality_ != b.modality_ || a.dim_ != b.dim_ ||
        a.normalized_ != b.normalized_ || a.ids_ != b.ids_ || a.values_.size() != b.values_.size())
        return false;
    // Bitwise comparison so that -0.0 vs 0.0 counts as a difference.
    return a.values_.empty() ||
           std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0;
}

std::string encode_binary(const EmbeddingStore& s) {
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u8(kVersion);
    w.u8(static_cast<std::uint8_t>(s.modality()));
    w.u8(s.normalized() ? kFlagNormalized : 0);
    w.le(static_cast<std::uint32_t>(s.dim()));
    w.le(static_cast<std::uint64_t>(s.size()));
    w.str16(s.model_id());
    for (std::size_t i = 0; i < s.size(); ++i) {
        w.str16(s.id(i));
        for (float x : s.vector(i)) w.f32(x);
    }
    return w.take();
}

EmbeddingStore decode_binary(std::string_view bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, not an EMBS store");
    ByteReader r(bytes.substr(4));
    auto version = r.u8("version");
    if (version != kVersion) throw FormatError("unsupported store version " + std::to_string(version));
    auto modality = r.u8("modality");
    if (modality > 1) throw FormatError("unknown modality code " + std::to_string(modality));
    auto flags = r.u8("flags");
    if (flags & ~kFlagNormalized) throw FormatError("unknown flag bits " + std::to_string(flags));
    auto dim = r.le<std::uint32_t>("dim");
    if (dim == 0) throw FormatError("dim must be >= 1");
    auto count = r.le<std::uint64_t>("count");
    auto model_id = r.str16("model id");

    // Each record holds at least 2 + 4*dim bytes; reject impossible counts before allocating.
    const std::uint64_t min_record = 2 + 4ULL * dim;
    if (count > r.remaining() / min_record)
        throw CorruptError("truncated store: header declares " + std::to_string(count) + " records");

    EmbeddingStore store(std::move(model_id), static_cast<Modality>(modality), dim, (flags & kFlagNormalized) != 0);
    store.reserve(count);
    std::vector<float> vec(dim);
    for (std::uint64_t rec = 0; rec < count; ++rec) {
        auto id = r.str16("record id");
        r.need(4ULL * dim, "record vector");
        for (auto& x : vec) x = r.f32("record vector");
        store.add(std::move(id), std::span<const float>(vec));
    }
    if (r.remaining() != 0)
        throw CorruptError(std::to_string(r.remaining()) + " trailing bytes after " + std::to_string(count) + " records");
    if (store.normalized()) check_unit(store);
    return store;
}

EmbeddingStore load_store(const std::filesystem::path& path) {
    std::string bytes = read_file(path);
    if (bytes.empty()) throw FormatError(path.string() + ": empty file");
    if (bytes[0] == '{') return load_jsonl(path);
    return decode_binary(bytes);
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path, StoreFormat format) {
    write_file_atomic(path, format == StoreFormat::Binary ? encode_binary(store) : encode_jsonl(store));
}

EmbeddingStore normalize(const EmbeddingStore& store) {
    if (store.normalized()) return store;
    EmbeddingStore out(store.model_id(), store.modality(), store.dim(), true);
    out.reserve(store.size());
    std::vector<float> unit(store.dim());
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto v = store.vector(i);
        double n = norm_of(v);
        if (n == 0.0) throw ValueError("cannot normalize zero vector '" + store.id(i) + "'");
        for (std::size_t k = 0; k < v.size(); ++k) unit[k] = static_cast<float>(v[k] / n);
        out.add(store.id(i), std::span<const float>(unit));
    }
    return out;
}

std::vector<double> unit_rows(const EmbeddingStore& store) {
    const std::size_t d = store.dim();
    std::vector<double> out(store.size() * d);
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto v = store.vector(i);
        double n = norm_of(v);
        if (n == 0.0) throw ValueError("zero vector '" + store.id(i) + "' has no direction");
        for (std::size_t k = 0; k < d; ++k) out[i * d + k] = v[k] / n;
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw DimError("cosine of vectors with different lengths");
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += static_cast<double>(a[k]) * b[k];
        aa += static_cast<double>(a[k]) * a[k];
        bb += static_cast<double>(b[k]) * b[k];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

std::vector<double> normalized_copy(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    if (s == 0.0) throw ValueError("cannot normalize a zero vector");
    double n = std::sqrt(s);
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) x /= n;
    return out;
}

SimilarityMatrix cosine_matrix(const EmbeddingStore& queries, const EmbeddingStore& gallery) {
    if (queries.dim() != gallery.dim())
        throw DimError("query dim " + std::to_string(queries.dim()) + " != gallery dim " + std::to_string(gallery.dim()));
    const std::size_t d = queries.dim();
    const auto q = unit_rows(queries);
    const auto g = unit_rows(gallery);
    SimilarityMatrix m{queries.ids(), gallery.ids(), std::vector<double>(queries.size() * gallery.size())};
    const std::size_t cols = gallery.size();
    parallel_for(queries.size(), 16, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::span<const double> qi(q.data() + i * d, d);
            for (std::size_t j = 0; j < cols; ++j) m.values[i * cols + j] = dot(qi, {g.data() + j * d, d});
        }
    });
    return m;
}

}  // namespace oscope
