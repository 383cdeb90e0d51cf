#include "quanta/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "quanta/flow.hpp"

namespace quanta {

double psnr(const ImageD& reference, const ImageD& test, double peak) {
    check_same_dims(reference, test, "psnr");
    if (!(peak > 0.0))
        throw InputDomainError("psnr: peak must be > 0");
    double se = 0.0;
    for (size_t i = 0; i < reference.size(); ++i) {
        const double d = reference[i] - test[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(reference.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kSsimRadius = 5; // 11x11 window
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

} // namespace

double ssim(const ImageD& reference, const ImageD& test) {
    check_same_dims(reference, test, "ssim");
    const int win = 2 * kSsimRadius + 1;
    if (reference.width < win || reference.height < win)
        throw InputDomainError("ssim: image smaller than the 11x11 window (" +
                               std::to_string(reference.width) + "x" +
                               std::to_string(reference.height) + ")");

    double w[2 * kSsimRadius + 1];
    double wsum = 0.0;
    for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
        w[k + kSsimRadius] = std::exp(-0.5 * k * k / (kSsimSigma * kSsimSigma));
        wsum += w[k + kSsimRadius];
    }
    for (double& x : w) x /= wsum;

    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;

    double total = 0.0;
    size_t count = 0;
    for (int y = kSsimRadius; y < reference.height - kSsimRadius; ++y) {
        for (int x = kSsimRadius; x < reference.width - kSsimRadius; ++x) {
            double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
            for (int dy = -kSsimRadius; dy <= kSsimRadius; ++dy) {
                const double wy = w[dy + kSsimRadius];
                for (int dx = -kSsimRadius; dx <= kSsimRadius; ++dx) {
                    const double ww = wy * w[dx + kSsimRadius];
                    const double a = reference.at(x + dx, y + dy);
                    const double b = test.at(x + dx, y + dy);
                    mx += ww * a;
                    my += ww * b;
                    mxx += ww * a * a;
                    myy += ww * b * b;
                    mxy += ww * a * b;
                }
            }
            const double vx = mxx - mx * mx;
            const double vy = myy - my * my;
            const double cov = mxy - mx * my;
            const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

double total_variation(const ImageD& image) {
    double tv = 0.0;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x + 1 < image.width; ++x)
            tv += std::abs(image.at(x + 1, y) - image.at(x, y));
    for (int y = 0; y + 1 < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            tv += std::abs(image.at(x, y + 1) - image.at(x, y));
    return tv;
}

double temporal_consistency(const std::vector<ImageD>& video, const std::vector<FlowField>& flows) {
    if (video.size() < 2)
        throw InputDomainError("temporal_consistency: need at least 2 frames");
    if (flows.size() != video.size() - 1)
        throw InputDomainError("temporal_consistency: expected " +
                               std::to_string(video.size() - 1) + " flows, got " +
                               std::to_string(flows.size()));
    double total = 0.0;
    for (size_t k = 0; k + 1 < video.size(); ++k) {
        const WarpResult wr = warp_bilinear(video[k + 1], flows[k]);
        double sum = 0.0;
        size_t n = 0;
        for (size_t i = 0; i < wr.image.size(); ++i) {
            if (!wr.valid[i]) continue;
            sum += std::abs(video[k][i] - wr.image[i]);
            ++n;
        }
        total += n ? sum / static_cast<double>(n) : 0.0;
    }
    return total / static_cast<double>(video.size() - 1);
}

namespace {

ImageD normalize_by_reference_max(const ImageD& img, double scale) {
    ImageD out = img;
    for (double& v : out.values) {
        v = scale > 0.0 ? v / scale : v;
        v = std::min(1.0, std::max(0.0, v));
    }
    return out;
}

} // namespace

double psnr_flux(const ImageD& reference_flux, const ImageD& test_flux) {
    const double scale = image_max(reference_flux);
    return psnr(normalize_by_reference_max(reference_flux, scale),
                normalize_by_reference_max(test_flux, scale), 1.0);
}

double ssim_flux(const ImageD& reference_flux, const ImageD& test_flux) {
    const double scale = image_max(reference_flux);
    return ssim(normalize_by_reference_max(reference_flux, scale),
                normalize_by_reference_max(test_flux, scale));
}

double MetricReport::mean_psnr() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.psnr;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

double MetricReport::mean_ssim() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.ssim;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace

nlohmann::json MetricReport::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"method", r.method},
                          {"ppp", r.ppp},
                          {"frame", r.frame},
                          {"psnr", r.psnr},
                          {"ssim", r.ssim},
                          {"tv", r.tv},
                          {"temporal", std::isnan(r.temporal) ? nlohmann::json() : nlohmann::json(r.temporal)}});
    }
    return nlohmann::json{{"rows", rows_j},
                          {"mean_psnr", mean_psnr()},
                          {"mean_ssim", mean_ssim()}};
}

std::string MetricReport::csv_header() { return "method,ppp,frame,psnr,ssim,tv,temporal"; }

std::string MetricReport::to_csv() const {
    std::string out = csv_header() + "\n";
    for (const auto& r : rows) {
        out += r.method + "," + fmt_double(r.ppp) + "," + std::to_string(r.frame) + "," +
               fmt_double(r.psnr) + "," + fmt_double(r.ssim) + "," + fmt_double(r.tv) + "," +
               fmt_double(r.temporal) + "\n";
    }
    return out;
}

} // namespace quanta
