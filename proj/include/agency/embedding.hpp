#pragma once

#include <cmath>
#include <memory>
#include <string_view>
#include <vector>

#include "agency/errors.hpp"
#include "agency/text.hpp"

namespace agency {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dimension() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

inline double norm(const EmbeddingVector& v) {
    double s = 0.0;
    for (double x : v.values) s += x * x;
    return std::sqrt(s);
}

// Cosine similarity; 0 when either side is the zero vector.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) throw Error("cosine of vectors with different dimensions");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (na * nb);
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector embed(std::string_view text) const = 0;
    virtual std::size_t dimension() const = 0;
};

// Hashed bag of words: lowercased, punctuation-stripped tokens counted into
// FNV-1a buckets, then L2-normalized. Offline and deterministic.
class LexicalEmbeddingProvider final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultDimension = 256;

    explicit LexicalEmbeddingProvider(std::size_t dimension = kDefaultDimension) : dimension_(dimension) {
        if (dimension_ == 0) throw Error("embedding dimension must be positive");
    }

    std::size_t bucket(std::string_view token) const { return static_cast<std::size_t>(text::fnv1a(token) % dimension_); }

    EmbeddingVector embed(std::string_view input) const override {
        EmbeddingVector v{std::vector<double>(dimension_, 0.0)};
        for (const auto& token : text::tokenize(input)) v.values[bucket(token)] += 1.0;
        const double n = norm(v);
        if (n > 0.0)
            for (auto& x : v.values) x /= n;
        return v;
    }

    std::size_t dimension() const override { return dimension_; }

private:
    std::size_t dimension_;
};

}  // namespace agency
