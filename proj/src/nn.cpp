#include "cdp/nn.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "cdp/common.hpp"

namespace cdp::nn {

namespace {
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int s, int p)
    : in_c(in_channels), out_c(out_channels), k(kernel), stride(s), pad(p),
      W(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel, 0.0),
      b(out_channels, 0.0), dW(W.size(), 0.0), db(out_channels, 0.0) {}

void Conv2d::init(Rng& rng) {
    double std = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
    for (auto& w : W) w = std * rng.normal();
    // small positive bias keeps ReLU units alive at init and pre-activations
    // away from the kink, which finite-difference checks are sensitive to
    for (auto& v : b) v = 0.01;
}

Tensor Conv2d::forward(const Tensor& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    out_h_ = (x.h + 2 * pad - k) / stride + 1;
    out_w_ = (x.w + 2 * pad - k) / stride + 1;
    const int rows = in_c * k * k;
    const std::size_t npos = static_cast<std::size_t>(out_h_) * out_w_;

    cols_.assign(static_cast<std::size_t>(rows) * npos, 0.0);
    for (int ci = 0; ci < in_c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int r = (ci * k + ky) * k + kx;
                double* dst = &cols_[static_cast<std::size_t>(r) * npos];
                for (int oy = 0; oy < out_h_; ++oy) {
                    const int sy = oy * stride + ky - pad;
                    if (sy < 0 || sy >= x.h) continue;
                    const double* src = &x.v[(static_cast<std::size_t>(ci) * x.h + sy) * x.w];
                    double* drow = dst + static_cast<std::size_t>(oy) * out_w_;
                    for (int ox = 0; ox < out_w_; ++ox) {
                        const int sx = ox * stride + kx - pad;
                        if (sx >= 0 && sx < x.w) drow[ox] = src[sx];
                    }
                }
            }
        }
    }

    Tensor y(out_c, out_h_, out_w_);
    CMapRM wm(W.data(), out_c, rows);
    CMapRM cm(cols_.data(), rows, static_cast<Eigen::Index>(npos));
    MapRM ym(y.v.data(), out_c, static_cast<Eigen::Index>(npos));
    ym.noalias() = wm * cm;
    for (int co = 0; co < out_c; ++co) ym.row(co).array() += b[co];
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const int rows = in_c * k * k;
    const std::size_t npos = static_cast<std::size_t>(out_h_) * out_w_;

    CMapRM dym(dy.v.data(), out_c, static_cast<Eigen::Index>(npos));
    CMapRM cm(cols_.data(), rows, static_cast<Eigen::Index>(npos));
    MapRM dwm(dW.data(), out_c, rows);
    dwm.noalias() += dym * cm.transpose();
    for (int co = 0; co < out_c; ++co) db[co] += dym.row(co).sum();

    // dcols = W^T * dy, then scatter back (col2im)
    MatRM dcols(rows, static_cast<Eigen::Index>(npos));
    CMapRM wm(W.data(), out_c, rows);
    dcols.noalias() = wm.transpose() * dym;

    Tensor dx(in_c, in_h_, in_w_);
    for (int ci = 0; ci < in_c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int r = (ci * k + ky) * k + kx;
                const double* srow = dcols.data() + static_cast<std::size_t>(r) * npos;
                for (int oy = 0; oy < out_h_; ++oy) {
                    const int sy = oy * stride + ky - pad;
                    if (sy < 0 || sy >= in_h_) continue;
                    double* drow = &dx.v[(static_cast<std::size_t>(ci) * in_h_ + sy) * in_w_];
                    const double* sr = srow + static_cast<std::size_t>(oy) * out_w_;
                    for (int ox = 0; ox < out_w_; ++ox) {
                        const int sx = ox * stride + kx - pad;
                        if (sx >= 0 && sx < in_w_) drow[sx] += sr[ox];
                    }
                }
            }
        }
    }
    return dx;
}

Tensor Activation::forward(const Tensor& x) {
    Tensor y = x;
    switch (kind_) {
        case 0:
            for (auto& v : y.v)
                if (v < 0.0) v *= alpha_;
            cache_ = x;
            break;
        case 1:
            for (auto& v : y.v) v = std::tanh(v);
            cache_ = y;
            break;
        case 2:
            for (auto& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
            cache_ = y;
            break;
        default:
            throw ParameterError("activation: unknown kind");
    }
    return y;
}

Tensor Activation::backward(const Tensor& dy) const {
    Tensor dx = dy;
    switch (kind_) {
        case 0:
            for (std::size_t i = 0; i < dx.v.size(); ++i)
                if (cache_.v[i] < 0.0) dx.v[i] *= alpha_;
            break;
        case 1:
            for (std::size_t i = 0; i < dx.v.size(); ++i)
                dx.v[i] *= 1.0 - cache_.v[i] * cache_.v[i];
            break;
        case 2:
            for (std::size_t i = 0; i < dx.v.size(); ++i)
                dx.v[i] *= cache_.v[i] * (1.0 - cache_.v[i]);
            break;
    }
    return dx;
}

Tensor AvgPool2::forward(const Tensor& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor y(x.c, x.h / 2, x.w / 2);
    for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx)
                y.at(c, yy, xx) = 0.25 * (x.at(c, 2 * yy, 2 * xx) + x.at(c, 2 * yy, 2 * xx + 1) +
                                          x.at(c, 2 * yy + 1, 2 * xx) + x.at(c, 2 * yy + 1, 2 * xx + 1));
    return y;
}

Tensor AvgPool2::backward(const Tensor& dy) const {
    Tensor dx(dy.c, in_h_, in_w_);
    for (int c = 0; c < dy.c; ++c)
        for (int yy = 0; yy < dy.h; ++yy)
            for (int xx = 0; xx < dy.w; ++xx) {
                double g = 0.25 * dy.at(c, yy, xx);
                dx.at(c, 2 * yy, 2 * xx) += g;
                dx.at(c, 2 * yy, 2 * xx + 1) += g;
                dx.at(c, 2 * yy + 1, 2 * xx) += g;
                dx.at(c, 2 * yy + 1, 2 * xx + 1) += g;
            }
    return dx;
}

Tensor UpsampleNearest2::forward(const Tensor& x) {
    Tensor y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx) {
                double v = x.at(c, yy, xx);
                y.at(c, 2 * yy, 2 * xx) = v;
                y.at(c, 2 * yy, 2 * xx + 1) = v;
                y.at(c, 2 * yy + 1, 2 * xx) = v;
                y.at(c, 2 * yy + 1, 2 * xx + 1) = v;
            }
    return y;
}

Tensor UpsampleNearest2::backward(const Tensor& dy) const {
    Tensor dx(dy.c, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dx.c; ++c)
        for (int yy = 0; yy < dx.h; ++yy)
            for (int xx = 0; xx < dx.w; ++xx)
                dx.at(c, yy, xx) = dy.at(c, 2 * yy, 2 * xx) + dy.at(c, 2 * yy, 2 * xx + 1) +
                                   dy.at(c, 2 * yy + 1, 2 * xx) + dy.at(c, 2 * yy + 1, 2 * xx + 1);
    return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor y(x.c, 1, 1);
    double inv = 1.0 / (static_cast<double>(x.h) * x.w);
    for (int c = 0; c < x.c; ++c) {
        double s = 0.0;
        for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx) s += x.at(c, yy, xx);
        y.at(c, 0, 0) = s * inv;
    }
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) const {
    Tensor dx(dy.c, in_h_, in_w_);
    double inv = 1.0 / (static_cast<double>(in_h_) * in_w_);
    for (int c = 0; c < dy.c; ++c) {
        double g = dy.at(c, 0, 0) * inv;
        for (int yy = 0; yy < in_h_; ++yy)
            for (int xx = 0; xx < in_w_; ++xx) dx.at(c, yy, xx) = g;
    }
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor y(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return y;
}

void split_channels(const Tensor& d, int c_a, Tensor& da, Tensor& db) {
    da = Tensor(c_a, d.h, d.w);
    db = Tensor(d.c - c_a, d.h, d.w);
    std::copy(d.v.begin(), d.v.begin() + static_cast<std::ptrdiff_t>(da.v.size()), da.v.begin());
    std::copy(d.v.begin() + static_cast<std::ptrdiff_t>(da.v.size()), d.v.end(), db.v.begin());
}

void Adam::step(const std::vector<ParamRef>& params, double scale) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.w->size(), 0.0);
            v_.emplace_back(p.w->size(), 0.0);
        }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = *params[i].w;
        auto& g = *params[i].g;
        for (std::size_t j = 0; j < w.size(); ++j) {
            double grad = g[j] * scale;
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * grad;
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * grad * grad;
            w[j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
        }
    }
}

std::size_t param_count(const std::vector<ParamRef>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.w->size();
    return n;
}

std::vector<double> flatten_params(const std::vector<ParamRef>& params) {
    std::vector<double> flat;
    flat.reserve(param_count(params));
    for (const auto& p : params) flat.insert(flat.end(), p.w->begin(), p.w->end());
    return flat;
}

void restore_params(const std::vector<ParamRef>& params, const std::vector<double>& flat) {
    std::size_t off = 0;
    for (const auto& p : params) {
        if (off + p.w->size() > flat.size())
            throw FormatError("restore_params: flat parameter array too short");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + p.w->size()), p.w->begin());
        off += p.w->size();
    }
    if (off != flat.size()) throw FormatError("restore_params: flat parameter array size mismatch");
}

TemplateEstimator::TemplateEstimator(int pps, int channels, std::uint64_t seed)
    : pps_(pps), channels_(channels),
      stem_(1, channels, pps, pps, 0),
      enc1_(channels, channels, 3, 1, 1),
      enc2_(channels, 2 * channels, 3, 1, 1),
      bott_(2 * channels, 2 * channels, 3, 1, 1),
      dec2_(4 * channels, channels, 3, 1, 1),
      dec1_(2 * channels, channels, 3, 1, 1),
      head_(channels, 1, 1, 1, 0),
      a_stem_(0), a_e1_(0), a_e2_(0), a_bott_(0), a_d2_(0), a_d1_(0), a_head_(2) {
    Rng rng(hash2(seed, 0x756e6574ull));
    stem_.init(rng);
    enc1_.init(rng);
    enc2_.init(rng);
    bott_.init(rng);
    dec2_.init(rng);
    dec1_.init(rng);
    head_.init(rng);
}

Tensor TemplateEstimator::forward(const Tensor& x) {
    if (x.c != 1 || x.h % (4 * pps_) != 0 || x.w % (4 * pps_) != 0)
        throw DimensionError("estimator: input must be 1-channel with sides divisible by 4*pps");
    Tensor s = a_stem_.forward(stem_.forward(x));          // {C, n, m}
    e1_out_ = a_e1_.forward(enc1_.forward(s));             // {C, n, m}
    Tensor p1 = pool1_.forward(e1_out_);                   // {C, n/2, m/2}
    e2_out_ = a_e2_.forward(enc2_.forward(p1));            // {2C, n/2, m/2}
    Tensor p2 = pool2_.forward(e2_out_);                   // {2C, n/4, m/4}
    Tensor bt = a_bott_.forward(bott_.forward(p2));        // {2C, n/4, m/4}
    Tensor u2 = up2_.forward(bt);                          // {2C, n/2, m/2}
    skip2_c_ = u2.c;
    Tensor d2 = a_d2_.forward(dec2_.forward(concat_channels(u2, e2_out_)));  // {C, n/2, m/2}
    Tensor u1 = up1_.forward(d2);                          // {C, n, m}
    skip1_c_ = u1.c;
    Tensor d1 = a_d1_.forward(dec1_.forward(concat_channels(u1, e1_out_)));  // {C, n, m}
    return a_head_.forward(head_.forward(d1));             // {1, n, m}
}

void TemplateEstimator::backward(const Tensor& dy) {
    Tensor d = head_.backward(a_head_.backward(dy));
    d = dec1_.backward(a_d1_.backward(d));
    Tensor du1, de1;
    split_channels(d, skip1_c_, du1, de1);
    d = up1_.backward(du1);
    d = dec2_.backward(a_d2_.backward(d));
    Tensor du2, de2;
    split_channels(d, skip2_c_, du2, de2);
    d = up2_.backward(du2);
    d = bott_.backward(a_bott_.backward(d));
    d = pool2_.backward(d);
    for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] += de2.v[i];
    d = enc2_.backward(a_e2_.backward(d));
    d = pool1_.backward(d);
    for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] += de1.v[i];
    d = enc1_.backward(a_e1_.backward(d));
    stem_.backward(a_stem_.backward(d));
}

std::vector<ParamRef> TemplateEstimator::params() {
    std::vector<ParamRef> out;
    stem_.collect(out);
    enc1_.collect(out);
    enc2_.collect(out);
    bott_.collect(out);
    dec2_.collect(out);
    dec1_.collect(out);
    head_.collect(out);
    return out;
}

PatchDiscriminator::PatchDiscriminator(std::uint64_t seed)
    : c1_(1, 8, 3, 2, 1), c2_(8, 16, 3, 2, 1), c3_(16, 16, 3, 2, 1), fc_(16, 1, 1, 1, 0),
      a1_(0, 0.2), a2_(0, 0.2), a3_(0, 0.2) {
    Rng rng(hash2(seed, 0x64697363ull));
    c1_.init(rng);
    c2_.init(rng);
    c3_.init(rng);
    fc_.init(rng);
}

double PatchDiscriminator::forward(const Tensor& patch) {
    Tensor t = a1_.forward(c1_.forward(patch));
    t = a2_.forward(c2_.forward(t));
    t = a3_.forward(c3_.forward(t));
    t = fc_.forward(gap_.forward(t));
    return t.v[0];
}

Tensor PatchDiscriminator::backward(double dlogit) {
    Tensor d(1, 1, 1);
    d.v[0] = dlogit;
    d = gap_.backward(fc_.backward(d));
    d = c3_.backward(a3_.backward(d));
    d = c2_.backward(a2_.backward(d));
    return c1_.backward(a1_.backward(d));
}

std::vector<ParamRef> PatchDiscriminator::params() {
    std::vector<ParamRef> out;
    c1_.collect(out);
    c2_.collect(out);
    c3_.collect(out);
    fc_.collect(out);
    return out;
}

}  // namespace cdp::nn
