#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oscope/embedding_store.hpp"
#include "oscope/errors.hpp"
#include "oscope/io.hpp"
#include "oscope/parallel.hpp"
#include "test_util.hpp"

using namespace oscope;
using oscope::testing::random_store;
using oscope::testing::store_of;
using oscope::testing::TempDir;

TEST_CASE("binary store round trips a two-record fixture") {
    TempDir dir;
    auto s = store_of({{"a", {1, 0}}, {"b", {0, 1}}});
    save_store(s, dir / "s.embs");
    auto loaded = load_store(dir / "s.embs");
    CHECK(loaded.size() == 2);
    CHECK(loaded.dim() == 2);
    CHECK(loaded == s);
    CHECK(loaded.at("b")[1] == 1.0f);
}

TEST_CASE("binary layout matches the documented header") {
    auto s = store_of({{"a", {1, 2}}, {"b", {3, 4}}, {"c", {5, 6}}}, Modality::Image);
    const auto bytes = encode_binary(s);
    REQUIRE(bytes.size() > 19);
    CHECK(bytes.substr(0, 4) == "EMBS");
    CHECK(bytes[4] == 1);                         // version
    CHECK(bytes[5] == 1);                         // image
    CHECK(bytes[6] == 0);                         // flags
    CHECK(static_cast<unsigned char>(bytes[7]) == 2);  // dim, little-endian
    std::uint64_t count = 0;
    for (int i = 0; i < 8; ++i) count |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[11 + i])) << (8 * i);
    CHECK(count == 3);
    const std::size_t header = 4 + 3 + 4 + 8 + 2 + s.model_id().size();
    CHECK(bytes.size() == header + 3 * (2 + 1 + 2 * 4));
}

TEST_CASE("empty store writes a header-only file that loads") {
    TempDir dir;
    EmbeddingStore s("empty", Modality::Text, 4);
    save_store(s, dir / "e.embs");
    auto bytes = read_file(dir / "e.embs");
    CHECK(bytes.size() == 4 + 3 + 4 + 8 + 2 + 5);
    auto loaded = load_store(dir / "e.embs");
    CHECK(loaded.empty());
    CHECK(loaded.dim() == 4);
}

TEST_CASE("randomized stores round trip byte-identically") {
    TempDir dir;
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 25; ++trial) {
        auto s = random_store(rng, rng() % 40, 1 + rng() % 33, trial % 2 ? Modality::Image : Modality::Text);
        if (trial % 3 == 0 && !s.empty()) s = normalize(s);
        const auto p = dir / ("r" + std::to_string(trial) + ".embs");
        save_store(s, p);
        const auto original = read_file(p);
        auto loaded = load_store(p);
        CHECK(loaded == s);
        save_store(loaded, p);
        CHECK(read_file(p) == original);

        const auto pj = dir / ("r" + std::to_string(trial) + ".jsonl");
        save_store(s, pj, StoreFormat::Jsonl);
        CHECK(load_store(pj) == s);
    }
}

TEST_CASE("jsonl store reports the offending line") {
    TempDir dir;
    {
        std::ofstream out(dir / "bad.jsonl");
        out << R"({"embs":1,"dim":2,"modality":"text","model_id":"m","normalized":false})" << "\n";
        out << R"({"id":"a","vec":[1,0]})" << "\n";
        out << R"({"id":"b","vec":[1,0,3]})" << "\n";
    }
    try {
        load_store(dir / "bad.jsonl");
        FAIL("expected CorruptError");
    } catch (const CorruptError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("load_store error classes") {
    TempDir dir;
    auto s = store_of({{"a", {1, 0}}, {"b", {0, 1}}});
    auto bytes = encode_binary(s);

    SUBCASE("bad magic") {
        auto b = bytes;
        b[0] = 'X';
        write_file_atomic(dir / "x", b);
        CHECK_THROWS_AS(load_store(dir / "x"), FormatError);
    }
    SUBCASE("bad version") {
        auto b = bytes;
        b[4] = 2;
        write_file_atomic(dir / "x", b);
        CHECK_THROWS_AS(load_store(dir / "x"), FormatError);
    }
    SUBCASE("truncated record") {
        write_file_atomic(dir / "x", bytes.substr(0, bytes.size() - 3));
        CHECK_THROWS_AS(load_store(dir / "x"), CorruptError);
    }
    SUBCASE("truncated header") {
        write_file_atomic(dir / "x", bytes.substr(0, 9));
        CHECK_THROWS_AS(load_store(dir / "x"), CorruptError);
    }
    SUBCASE("trailing garbage") {
        write_file_atomic(dir / "x", bytes + "zz");
        CHECK_THROWS_AS(load_store(dir / "x"), CorruptError);
    }
    SUBCASE("duplicate id") {
        auto b = bytes;
        // Second record id "b" sits right after the first record.
        auto pos = b.rfind('b');
        b[pos] = 'a';
        write_file_atomic(dir / "x", b);
        CHECK_THROWS_AS(load_store(dir / "x"), DuplicateIdError);
    }
    SUBCASE("nan component") {
        auto b = bytes;
        const float nan = std::nanf("");
        std::memcpy(b.data() + b.size() - 4, &nan, 4);
        write_file_atomic(dir / "x", b);
        CHECK_THROWS_AS(load_store(dir / "x"), ValueError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_store(dir / "nope"), IoError); }
}

TEST_CASE("store invariants are enforced on insert") {
    EmbeddingStore s("m", Modality::Text, 2);
    const float ok[] = {1, 2};
    const float wrong[] = {1, 2, 3};
    const float inf[] = {1, INFINITY};
    s.add("a", std::span<const float>(ok));
    CHECK_THROWS_AS(s.add("b", std::span<const float>(wrong)), DimError);
    CHECK_THROWS_AS(s.add("a", std::span<const float>(ok)), DuplicateIdError);
    CHECK_THROWS_AS(s.add("c", std::span<const float>(inf)), ValueError);
    CHECK_THROWS_AS(s.add(std::string(70000, 'x'), std::span<const float>(ok)), ValueError);
    CHECK_THROWS_AS(EmbeddingStore("m", Modality::Text, 0), ValueError);
    CHECK_THROWS_AS(s.at("zz"), KeyError);
}

TEST_CASE("normalize") {
    SUBCASE("3-4-5 triangle") {
        auto n = normalize(store_of({{"v", {3, 4}}}));
        CHECK(n.normalized());
        CHECK(n.at("v")[0] == doctest::Approx(0.6).epsilon(1e-7));
        CHECK(n.at("v")[1] == doctest::Approx(0.8).epsilon(1e-7));
    }
    SUBCASE("unit vectors are unchanged") {
        auto n = normalize(store_of({{"e", {1, 0, 0}}, {"f", {0, -1, 0}}}));
        CHECK(n.at("e")[0] == 1.0f);
        CHECK(n.at("f")[1] == -1.0f);
    }
    SUBCASE("idempotent and order preserving") {
        std::mt19937_64 rng(7);
        auto s = random_store(rng, 50, 16);
        auto once = normalize(s);
        auto twice = normalize(once);
        CHECK(once.ids() == s.ids());
        REQUIRE(twice.data().size() == once.data().size());
        for (std::size_t i = 0; i < once.data().size(); ++i) CHECK(std::abs(twice.data()[i] - once.data()[i]) <= 1e-12);
        for (std::size_t i = 0; i < once.size(); ++i) {
            double n = 0;
            for (float x : once.vector(i)) n += double(x) * x;
            CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
        }
    }
    SUBCASE("zero vector names its id") {
        try {
            normalize(store_of({{"fine", {1, 1}}, {"hollow", {0, 0}}}));
            FAIL("expected ValueError");
        } catch (const ValueError& e) {
            CHECK(std::string(e.what()).find("hollow") != std::string::npos);
        }
    }
}

TEST_CASE("cosine_matrix") {
    SUBCASE("hand dot product") {
        auto m = cosine_matrix(store_of({{"q", {1, 0}}}), store_of({{"g", {0.6f, 0.8f}}}));
        CHECK(m(0, 0) == doctest::Approx(0.6).epsilon(1e-6));
    }
    SUBCASE("self similarity") {
        auto s = store_of({{"q", {0.3f, -2.0f, 5.0f}}});
        CHECK(cosine_matrix(s, s)(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("matches a naive double loop") {
        std::mt19937_64 rng(11);
        auto q = random_store(rng, 5, 9), g = random_store(rng, 7, 9);
        auto m = cosine_matrix(q, g);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 7; ++j) {
                long double ab = 0, aa = 0, bb = 0;
                for (std::size_t k = 0; k < 9; ++k) {
                    long double a = q.vector(i)[k], b = g.vector(j)[k];
                    ab += a * b;
                    aa += a * a;
                    bb += b * b;
                }
                CHECK(std::abs(m(i, j) - double(ab / std::sqrt(aa * bb))) < 1e-6);
            }
    }
    SUBCASE("scale invariance and symmetry") {
        std::mt19937_64 rng(12);
        auto a = random_store(rng, 6, 5), b = random_store(rng, 4, 5);
        EmbeddingStore scaled(a.model_id(), a.modality(), a.dim());
        for (std::size_t i = 0; i < a.size(); ++i) {
            std::vector<float> v(a.vector(i).begin(), a.vector(i).end());
            for (auto& x : v) x *= 0.25f + static_cast<float>(i);
            scaled.add(a.id(i), std::span<const float>(v));
        }
        auto ab = cosine_matrix(a, b), sb = cosine_matrix(scaled, b), ba = cosine_matrix(b, a);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(std::abs(ab(i, j) - sb(i, j)) < 1e-6);
                CHECK(std::abs(ab(i, j) - ba(j, i)) < 1e-6);
                CHECK(ab(i, j) <= 1.0 + 1e-12);
                CHECK(ab(i, j) >= -1.0 - 1e-12);
            }
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(cosine_matrix(store_of({{"q", {1, 0}}}), store_of({{"g", {1, 0, 0}}})), DimError);
    }
    SUBCASE("thread count does not change a single bit") {
        std::mt19937_64 rng(13);
        auto q = random_store(rng, 300, 24), g = random_store(rng, 50, 24);
        set_thread_count(1);
        auto one = cosine_matrix(q, g);
        set_thread_count(4);
        auto four = cosine_matrix(q, g);
        set_thread_count(0);
        CHECK(std::memcmp(one.values.data(), four.values.data(), one.values.size() * sizeof(double)) == 0);
    }
}
