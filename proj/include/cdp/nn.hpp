#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cdp/rng.hpp"

namespace cdp::nn {

// Dense CHW tensor, double precision. One sample at a time; batching is done
// by accumulating gradients across samples before an optimizer step.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int ch, int height, int width)
        : c(ch), h(height), w(width),
          v(static_cast<std::size_t>(ch) * height * width, 0.0) {}

    double& at(int ch, int y, int x) {
        return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    double at(int ch, int y, int x) const {
        return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    std::size_t size() const { return v.size(); }
};

struct ParamRef {
    std::vector<double>* w;
    std::vector<double>* g;
};

class Conv2d {
public:
    Conv2d(int in_c, int out_c, int k, int stride, int pad);

    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);  // accumulates dW/db, returns dx

    void collect(std::vector<ParamRef>& out) {
        out.push_back({&W, &dW});
        out.push_back({&b, &db});
    }

    int in_c, out_c, k, stride, pad;
    std::vector<double> W, b, dW, db;  // W is [out_c][in_c*k*k] row-major

private:
    std::vector<double> cols_;  // cached im2col of the last input
    int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

// Pointwise activation. kind: 0 = leaky ReLU (alpha*x for x<0), 1 = tanh,
// 2 = sigmoid. Plain ReLU is leaky with alpha 0.
class Activation {
public:
    Activation(int kind, double alpha = 0.0) : kind_(kind), alpha_(alpha) {}
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    int kind_;
    double alpha_;
    Tensor cache_;  // input for relu, output for tanh/sigmoid
};

class AvgPool2 {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    int in_h_ = 0, in_w_ = 0;
};

class UpsampleNearest2 {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;
};

class GlobalAvgPool {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    int in_h_ = 0, in_w_ = 0;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int c_a, Tensor& da, Tensor& db);

class Adam {
public:
    explicit Adam(double lr) : lr_(lr) {}
    // grads are multiplied by `scale` (e.g. 1/batch) before the update
    void step(const std::vector<ParamRef>& params, double scale);

private:
    double lr_, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

inline void zero_grads(const std::vector<ParamRef>& params) {
    for (const auto& p : params) std::fill(p.g->begin(), p.g->end(), 0.0);
}

std::size_t param_count(const std::vector<ParamRef>& params);
std::vector<double> flatten_params(const std::vector<ParamRef>& params);
void restore_params(const std::vector<ParamRef>& params, const std::vector<double>& flat);

// Image-to-image template estimator: a strided stem that folds each printed
// symbol's pps x pps pixel block into channels, a 3-level encoder-decoder
// with skip connections over the symbol grid, and a sigmoid head giving one
// whiteness value per symbol. Input height/width must be divisible by
// 4*pps (two pooling levels).
class TemplateEstimator {
public:
    TemplateEstimator(int pps, int channels, std::uint64_t seed);

    Tensor forward(const Tensor& x);    // x: {1, n*pps, m*pps} -> {1, n, m}
    void backward(const Tensor& dy);    // dy matches forward output
    std::vector<ParamRef> params();

    int pps() const { return pps_; }
    int channels() const { return channels_; }

private:
    int pps_, channels_;
    Conv2d stem_, enc1_, enc2_, bott_, dec2_, dec1_, head_;
    Activation a_stem_, a_e1_, a_e2_, a_bott_, a_d2_, a_d1_, a_head_;
    AvgPool2 pool1_, pool2_;
    UpsampleNearest2 up2_, up1_;
    Tensor e1_out_, e2_out_;  // skip caches
    int skip2_c_ = 0, skip1_c_ = 0;
};

// Binary-vs-estimate patch critic used for the density-ratio penalty:
// three strided convs, global average pooling, linear logit.
class PatchDiscriminator {
public:
    explicit PatchDiscriminator(std::uint64_t seed);

    double forward(const Tensor& patch);   // {1, p, p} -> logit
    Tensor backward(double dlogit);        // gradient w.r.t. the input patch
    std::vector<ParamRef> params();

private:
    Conv2d c1_, c2_, c3_, fc_;
    Activation a1_, a2_, a3_;
    GlobalAvgPool gap_;
};

}  // namespace cdp::nn
