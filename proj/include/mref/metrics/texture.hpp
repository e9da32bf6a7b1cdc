#pragma once

#include <mref/core/error.hpp>
#include <mref/core/image.hpp>

#include <cmath>
#include <span>
#include <vector>

namespace mref {

/// C x C channel correlation matrix in 64-bit.
struct GramMatrix
{
    int n = 0;
    std::vector<double> v;

    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * n + j]; }
};

/// G = F F^T / (C H W) with F the C x (H W) flattening. Upper triangle computed, lower mirrored.
template <class T>
GramMatrix gram(const BasicFeatureMap<T>& fm)
{
    const int C = fm.channels();
    const std::size_t N = fm.plane_size();
    const double norm = static_cast<double>(C) * static_cast<double>(N);
    GramMatrix g{C, std::vector<double>(static_cast<std::size_t>(C) * C, 0.0)};
    for (int i = 0; i < C; ++i) {
        auto pi = fm.plane(i);
        for (int j = i; j < C; ++j) {
            auto pj = fm.plane(j);
            double s = 0.0;
            for (std::size_t k = 0; k < N; ++k)
                s += static_cast<double>(pi[k]) * static_cast<double>(pj[k]);
            g.at(i, j) = s / norm;
            g.at(j, i) = g.at(i, j);
        }
    }
    return g;
}

/// Every channel multiplied element-wise by the single-channel spatial map `w`.
template <class T>
BasicFeatureMap<T> modulate(const BasicFeatureMap<T>& fm, const BasicFeatureMap<T>& w)
{
    if (w.channels() != 1 || w.height() != fm.height() || w.width() != fm.width())
        throw ShapeError("weight map must be single-channel with the feature map's spatial dims");
    BasicFeatureMap<T> out = fm;
    auto wp = w.plane(0);
    for (int c = 0; c < fm.channels(); ++c) {
        auto p = out.plane(c);
        for (std::size_t k = 0; k < p.size(); ++k)
            p[k] *= wp[k];
    }
    return out;
}

namespace detail {

template <class T>
void check_layers(std::span<const BasicFeatureMap<T>> sr, std::span<const BasicFeatureMap<T>> swapped,
                  std::span<const BasicFeatureMap<T>> weights)
{
    if (sr.size() != swapped.size() || sr.size() != weights.size())
        throw ShapeError("texture loss: layer counts differ");
    for (std::size_t h = 0; h < sr.size(); ++h)
        if (!sr[h].same_shape(swapped[h]))
            throw ShapeError("texture loss: layer " + std::to_string(h) + " shapes differ");
}

template <class T>
GramMatrix gram_difference(const BasicFeatureMap<T>& sr, const BasicFeatureMap<T>& swapped,
                           const BasicFeatureMap<T>& w)
{
    GramMatrix d = gram(modulate(sr, w));
    const GramMatrix o = gram(modulate(swapped, w));
    for (std::size_t k = 0; k < d.v.size(); ++k)
        d.v[k] -= o.v[k];
    return d;
}

} // namespace detail

/// Sum over layers of the Frobenius norm of the weight-modulated Gram difference.
template <class T>
double texture_loss(std::span<const BasicFeatureMap<T>> sr_feats, std::span<const BasicFeatureMap<T>> swapped,
                    std::span<const BasicFeatureMap<T>> weights)
{
    detail::check_layers(sr_feats, swapped, weights);
    double total = 0.0;
    for (std::size_t h = 0; h < sr_feats.size(); ++h) {
        const GramMatrix d = detail::gram_difference(sr_feats[h], swapped[h], weights[h]);
        double s = 0.0;
        for (double v : d.v)
            s += v * v;
        total += std::sqrt(s);
    }
    return total;
}

/// Squared-Frobenius variant; smooth everywhere, used for gradients.
template <class T>
double texture_loss_squared(std::span<const BasicFeatureMap<T>> sr_feats,
                            std::span<const BasicFeatureMap<T>> swapped,
                            std::span<const BasicFeatureMap<T>> weights)
{
    detail::check_layers(sr_feats, swapped, weights);
    double total = 0.0;
    for (std::size_t h = 0; h < sr_feats.size(); ++h)
        for (double v : detail::gram_difference(sr_feats[h], swapped[h], weights[h]).v)
            total += v * v;
    return total;
}

/// Gradient of texture_loss_squared with respect to sr_feats:
/// dL/dF = 4 / (C H W) * (dG (F o W)) o W per layer.
template <class T>
std::vector<BasicFeatureMap<T>> texture_loss_grad(std::span<const BasicFeatureMap<T>> sr_feats,
                                                  std::span<const BasicFeatureMap<T>> swapped,
                                                  std::span<const BasicFeatureMap<T>> weights)
{
    detail::check_layers(sr_feats, swapped, weights);
    std::vector<BasicFeatureMap<T>> grads;
    for (std::size_t h = 0; h < sr_feats.size(); ++h) {
        const auto& F = sr_feats[h];
        const auto& w = weights[h];
        const BasicFeatureMap<T> fw = modulate(F, w);
        const GramMatrix d = detail::gram_difference(F, swapped[h], w);
        const int C = F.channels();
        const std::size_t N = F.plane_size();
        const double scale = 4.0 / (static_cast<double>(C) * static_cast<double>(N));
        BasicFeatureMap<T> g(C, F.height(), F.width());
        auto wp = w.plane(0);
        for (int i = 0; i < C; ++i) {
            auto gi = g.plane(i);
            for (std::size_t k = 0; k < N; ++k) {
                double s = 0.0;
                for (int j = 0; j < C; ++j)
                    s += d.at(i, j) * static_cast<double>(fw.plane(j)[k]);
                gi[k] = static_cast<T>(scale * s * static_cast<double>(wp[k]));
            }
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

} // namespace mref
