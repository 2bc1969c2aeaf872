#include "pft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace pft {

template <typename T>
Tensor<T> l1_loss(const ViewPair<T>& pred, const ViewPair<T>& target) {
    if (pred.left.shape() != target.left.shape() || pred.right.shape() != target.right.shape()) {
        throw ShapeError("l1_loss: prediction " + shape_str(pred.left.shape()) + " vs target " +
                         shape_str(target.left.shape()));
    }
    const std::size_t n = pred.left.numel() + pred.right.numel();
    auto total = ops::add(ops::sum(ops::abs(ops::sub(pred.left, target.left))),
                          ops::sum(ops::abs(ops::sub(pred.right, target.right))));
    return ops::scale(total, static_cast<T>(1.0 / static_cast<double>(n)));
}

namespace {

void require_same_size(const Image& a, const Image& b, const char* what) {
    if (!a.same_size(b)) {
        throw ImageError(std::string(what) + ": image sizes differ (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                         ")");
    }
}

// Valid-mode separable filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
    const std::size_t k = g.size();
    const std::size_t oh = h - k + 1;
    const std::size_t ow = w - k + 1;
    std::vector<double> rows(h * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += g[i] * plane[y * w + x + i];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(oh * ow);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += g[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

// Sorted summation keeps aggregate metrics independent of image order.
double ordered_mean(std::vector<double> v) {
    std::vector<double> finite;
    for (double x : v)
        if (std::isfinite(x)) finite.push_back(x);
    if (finite.empty()) return v.empty() ? 0.0 : kPsnrIdentical;
    std::sort(finite.begin(), finite.end());
    double s = 0.0;
    for (double x : finite) s += x;
    return s / static_cast<double>(finite.size());
}

std::string fmt(double v, int digits) {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same_size(a, b, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
        se += d * d;
    }
    if (se == 0.0) return kPsnrIdentical;
    const double mse = se / static_cast<double>(a.values.size());
    return 10.0 * std::log10(1.0 / mse);
}

std::vector<double> ssim_gaussian() {
    std::vector<double> g(kSsimWindow);
    const double center = static_cast<double>(kSsimWindow / 2);
    double total = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        const double d = static_cast<double>(i) - center;
        g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        total += g[i];
    }
    for (double& x : g) x /= total;
    return g;
}

double ssim(const Image& a, const Image& b) {
    require_same_size(a, b, "ssim");
    if (a.height < kSsimWindow || a.width < kSsimWindow) {
        throw ImageError("ssim: images must be at least 11x11, got " + std::to_string(a.height) + "x" +
                         std::to_string(a.width));
    }
    const auto g = ssim_gaussian();
    const std::size_t h = a.height, w = a.width, n = a.plane();
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            pa[i] = a.values[c * n + i];
            pb[i] = b.values[c * n + i];
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, h, w, g);
        const auto mu_b = filter_valid(pb, h, w, g);
        const auto e_aa = filter_valid(aa, h, w, g);
        const auto e_bb = filter_valid(bb, h, w, g);
        const auto e_ab = filter_valid(ab, h, w, g);
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma2 = mu_a[i] * mu_a[i];
            const double mb2 = mu_b[i] * mu_b[i];
            const double mab = mu_a[i] * mu_b[i];
            const double va = e_aa[i] - ma2;
            const double vb = e_bb[i] - mb2;
            const double cov = e_ab[i] - mab;
            total += ((2.0 * mab + kSsimC1) * (2.0 * cov + kSsimC2)) / ((ma2 + mb2 + kSsimC1) * (va + vb + kSsimC2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

EvalRow evaluate_pairs(const std::vector<StereoPair>& sr, const std::vector<StereoPair>& gt) {
    if (sr.size() != gt.size()) {
        throw Error("evaluate_pairs: " + std::to_string(sr.size()) + " outputs vs " + std::to_string(gt.size()) +
                    " references");
    }
    if (sr.empty()) throw Error("evaluate_pairs: no images");
    std::vector<double> psnr_l, ssim_l, psnr_all, ssim_all;
    for (std::size_t i = 0; i < sr.size(); ++i) {
        const double pl = psnr(sr[i].left, gt[i].left);
        const double pr = psnr(sr[i].right, gt[i].right);
        const double sl = ssim(sr[i].left, gt[i].left);
        const double sr_ = ssim(sr[i].right, gt[i].right);
        psnr_l.push_back(pl);
        ssim_l.push_back(sl);
        psnr_all.insert(psnr_all.end(), {pl, pr});
        ssim_all.insert(ssim_all.end(), {sl, sr_});
    }
    EvalRow row;
    row.images = sr.size();
    row.psnr_left = ordered_mean(psnr_l);
    row.ssim_left = ordered_mean(ssim_l);
    row.psnr_avg = ordered_mean(psnr_all);
    row.ssim_avg = ordered_mean(ssim_all);
    return row;
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s %5s %6s %10s %10s %10s %10s\n", "dataset", "scale", "images",
                  "psnr_left", "ssim_left", "psnr_avg", "ssim_avg");
    os << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-16s %5zu %6zu %10s %10s %10s %10s\n", r.dataset.c_str(), r.scale,
                      r.images, fmt(r.psnr_left, 2).c_str(), fmt(r.ssim_left, 4).c_str(), fmt(r.psnr_avg, 2).c_str(),
                      fmt(r.ssim_avg, 4).c_str());
        os << line;
    }
    return os.str();
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << kEvalCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.dataset << ',' << r.scale << ',' << r.images << ',' << fmt(r.psnr_left, 4) << ','
           << fmt(r.ssim_left, 6) << ',' << fmt(r.psnr_avg, 4) << ',' << fmt(r.ssim_avg, 6) << '\n';
    }
    return os.str();
}

template Tensor<float> l1_loss(const ViewPair<float>&, const ViewPair<float>&);
template Tensor<double> l1_loss(const ViewPair<double>&, const ViewPair<double>&);

}  // namespace pft
