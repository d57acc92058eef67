#pragma once

// Test-only reference implementations, kept independent of the library
// code paths they check.

#include <algorithm>
#include <numeric>
#include <vector>

#include "flycl/fly_model.hpp"

namespace oracle {

using flycl::Mat;
using flycl::Vec;

// materialize the implied 0/1 matrix and multiply densely
inline Vec dense_expand(const flycl::SparseBinaryProjection& proj, const Vec& x) {
    Mat W = Mat::Zero(proj.n_out, proj.n_in);
    for (int i = 0; i < proj.n_out; ++i)
        for (auto j : proj.row(i)) W(i, j) = 1.0;
    return W * x;
}

// full sort by (value desc, index asc), take the first `a`
inline std::vector<int> sort_topk(const Vec& v, int a) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) {
        if (v[i] != v[j]) return v[i] > v[j];
        return i < j;
    });
    idx.resize(a);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// plain fully-connected network with the same layout as an ablated model:
// pre-layers (affine + relu/identity) then a linear head; analytic
// gradients by standard backprop
struct DenseNet {
    std::vector<Mat> W;   // per layer
    std::vector<Vec> b;   // empty vec = no bias on that layer
    std::vector<bool> relu;

    Vec forward(const Vec& x, std::vector<Vec>* lin_out = nullptr) const {
        Vec cur = x;
        for (std::size_t l = 0; l < W.size(); ++l) {
            Vec z = W[l] * cur;
            if (b[l].size() > 0) z += b[l];
            if (lin_out) lin_out->push_back(z);
            cur = relu[l] ? z.cwiseMax(0.0).eval() : z;
        }
        return cur;
    }

    // gradients of a scalar loss with the given output gradient
    void backward(const Vec& x, const Vec& out_grad, std::vector<Mat>& gW, std::vector<Vec>& gb) const {
        std::vector<Vec> lin;
        std::vector<Vec> act{x};
        Vec cur = x;
        for (std::size_t l = 0; l < W.size(); ++l) {
            Vec z = W[l] * cur;
            if (b[l].size() > 0) z += b[l];
            lin.push_back(z);
            cur = relu[l] ? z.cwiseMax(0.0).eval() : z;
            act.push_back(cur);
        }
        gW.assign(W.size(), Mat());
        gb.assign(W.size(), Vec());
        Vec delta = out_grad;
        for (int l = static_cast<int>(W.size()) - 1; l >= 0; --l) {
            if (relu[l])
                for (int i = 0; i < delta.size(); ++i)
                    if (lin[l][i] <= 0.0) delta[i] = 0.0;
            gW[l] = delta * act[l].transpose();
            gb[l] = (b[l].size() > 0) ? delta : Vec();
            if (l > 0) delta = W[l].transpose() * delta;
        }
    }
};

}  // namespace oracle
