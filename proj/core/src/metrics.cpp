#include "mvr/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mvr/errors.hpp"
#include "mvr/geometry.hpp"

namespace mvr {

namespace {

double mse(const Image& a, const Image& b) {
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

/// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
std::vector<double> ssim_window() {
    constexpr int kRadius = 5;
    std::vector<double> w(11 * 11);
    double sum = 0;
    for (int y = -kRadius; y <= kRadius; ++y)
        for (int x = -kRadius; x <= kRadius; ++x) {
            const double g = std::exp(-(y * y + x * x) / (2.0 * 1.5 * 1.5));
            w[static_cast<size_t>((y + kRadius) * 11 + (x + kRadius))] = g;
            sum += g;
        }
    for (double& v : w) v /= sum;
    return w;
}

Image crop_patch(const Image& im, int top, int left, int size) {
    Image out(size, size, im.channels());
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < im.channels(); ++c)
                out.at(y, x, c) = im.at(top + y, left + x, c);
    return out;
}

void require_aligned_viewsets(const ViewSet& restored, const ViewSet& gt,
                              const char* caller) {
    if (restored.n_views() != gt.n_views())
        throw ContractError(std::string(caller) + ": restored/gt view counts differ");
    if (!gt.has_depths() || !gt.has_cameras())
        throw ContractError(std::string(caller) + ": gt needs depths and cameras");
    for (int v = 0; v < gt.n_views(); ++v)
        if (!restored.images[static_cast<size_t>(v)].same_shape(
                gt.images[static_cast<size_t>(v)]))
            throw ContractError(std::string(caller) + ": image shapes differ from gt");
}

std::optional<double> mean_of_defined(const std::vector<std::optional<double>>& xs) {
    double sum = 0;
    int n = 0;
    for (const auto& x : xs)
        if (x) {
            sum += *x;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ContractError("psnr: shape mismatch");
    const double m = mse(a, b);
    if (m <= 0) return 99.0;  // identical images: capped sentinel
    return std::min(99.0, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ContractError("ssim: shape mismatch");
    if (a.height() < 11 || a.width() < 11)
        throw ContractError("ssim: image smaller than the 11x11 window");

    static const std::vector<double> window = ssim_window();
    constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
    constexpr double kC2 = 0.03 * 0.03;

    double total = 0;
    int64_t n_windows = 0;
    for (int c = 0; c < a.channels(); ++c) {
        for (int top = 0; top + 11 <= a.height(); ++top) {
            for (int left = 0; left + 11 <= a.width(); ++left) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int y = 0; y < 11; ++y)
                    for (int x = 0; x < 11; ++x) {
                        const double w = window[static_cast<size_t>(y * 11 + x)];
                        const double pa = a.at(top + y, left + x, c);
                        const double pb = b.at(top + y, left + x, c);
                        ma += w * pa;
                        mb += w * pb;
                        saa += w * pa * pa;
                        sbb += w * pb * pb;
                        sab += w * pa * pb;
                    }
                const double va = saa - ma * ma;
                const double vb = sbb - mb * mb;
                const double cov = sab - ma * mb;
                total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                         ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
                ++n_windows;
            }
        }
    }
    return total / static_cast<double>(n_windows);
}

std::vector<VConsisPair> vconsis_pairs(const ViewSet& restored, const ViewSet& gt,
                                       const PerceptualBackend& backend,
                                       const VConsisOptions& opt) {
    require_aligned_viewsets(restored, gt, "visual_consistency");
    if (opt.patch_size < 2) throw ContractError("visual_consistency: patch_size too small");
    if (opt.min_points < 3)
        throw ContractError("visual_consistency: min_points must be >= 3 for the affine fit");
    gt.validate("visual_consistency gt");

    const int n = gt.n_views();
    const int h = gt.images[0].height(), w = gt.images[0].width();
    std::vector<VConsisPair> out;

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            VConsisPair pair;
            pair.src = i;
            pair.dst = j;

            const CorrespondenceField corr = compute_correspondences(
                gt.depths[static_cast<size_t>(i)], gt.cameras[static_cast<size_t>(i)],
                gt.depths[static_cast<size_t>(j)], gt.cameras[static_cast<size_t>(j)],
                opt.occl_thresh);

            // Full tiles only, anchored at (0, 0); border remainders are
            // dropped.
            for (int top = 0; top + opt.patch_size <= h; top += opt.patch_size) {
                for (int left = 0; left + opt.patch_size <= w; left += opt.patch_size) {
                    std::vector<Eigen::Vector2d> src_pts, dst_pts;
                    for (int py = 0; py < opt.patch_size; ++py)
                        for (int px = 0; px < opt.patch_size; ++px) {
                            const int y = top + py, x = left + px;
                            if (!corr.valid(y, x)) continue;
                            src_pts.emplace_back(x, y);
                            dst_pts.emplace_back(corr.u_at(y, x), corr.v_at(y, x));
                        }
                    if (static_cast<int>(src_pts.size()) < opt.min_points) continue;

                    // The affine sends source pixels to their destination
                    // correspondences, so sampling the destination image at
                    // the mapped positions rebuilds the destination's view
                    // of this patch on the source grid.
                    const Affine2D affine = fit_affine(src_pts, dst_pts);
                    const Image src_gt =
                        crop_patch(gt.images[static_cast<size_t>(i)], top, left, opt.patch_size);
                    const Image pulled_gt = warp_patch_affine(
                        gt.images[static_cast<size_t>(j)], top, left, opt.patch_size, affine);
                    if (!(backend.distance(pulled_gt, src_gt) < opt.gt_gate)) continue;

                    const Image src_res = crop_patch(restored.images[static_cast<size_t>(i)],
                                                     top, left, opt.patch_size);
                    const Image pulled_res =
                        warp_patch_affine(restored.images[static_cast<size_t>(j)], top, left,
                                          opt.patch_size, affine);
                    pair.sum += backend.distance(pulled_res, src_res);
                    pair.n_kept += 1;
                }
            }
            out.push_back(pair);
        }
    }
    return out;
}

std::optional<double> visual_consistency(const ViewSet& restored, const ViewSet& gt,
                                         const PerceptualBackend& backend,
                                         const VConsisOptions& opt) {
    double sum = 0;
    int64_t n = 0;
    for (const VConsisPair& p : vconsis_pairs(restored, gt, backend, opt)) {
        sum += p.sum;
        n += p.n_kept;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

ScaleBias fit_depth_scale_bias(const DepthMap& pred, const DepthMap& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw ContractError("fit_depth_scale_bias: shape mismatch");
    double sp = 0, sg = 0, spp = 0, spg = 0;
    int64_t n = 0;
    for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x) {
            if (!pred.valid(y, x) || !gt.valid(y, x)) continue;
            const double p = pred.at(y, x), g = gt.at(y, x);
            sp += p;
            sg += g;
            spp += p * p;
            spg += p * g;
            ++n;
        }
    if (n == 0) throw ContractError("fit_depth_scale_bias: no shared valid pixels");

    const double det = static_cast<double>(n) * spp - sp * sp;
    if (det <= 1e-12 * static_cast<double>(n) * std::max(spp, 1e-30)) {
        // Constant prediction: scale is unidentifiable, fit the bias only.
        return {1.0, (sg - sp) / static_cast<double>(n)};
    }
    ScaleBias sb;
    sb.scale = (static_cast<double>(n) * spg - sp * sg) / det;
    sb.bias = (sg - sb.scale * sp) / static_cast<double>(n);
    return sb;
}

namespace {

DepthMap apply_scale_bias(const DepthMap& pred, const ScaleBias& sb) {
    DepthMap out(pred.height(), pred.width());
    for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x)
            if (pred.valid(y, x))
                out.at(y, x) = static_cast<float>(sb.scale * pred.at(y, x) + sb.bias);
    return out;
}

}  // namespace

std::vector<GConsisPair> gconsis_pairs(const std::vector<DepthMap>& pred, const ViewSet& gt,
                                       bool align, double occl_thresh) {
    if (!gt.has_depths() || !gt.has_cameras())
        throw ContractError("geometric_consistency: gt needs depths and cameras");
    if (static_cast<int>(pred.size()) != gt.n_views())
        throw ContractError("geometric_consistency: prediction/view count mismatch");
    for (int v = 0; v < gt.n_views(); ++v)
        if (pred[static_cast<size_t>(v)].height() != gt.depths[static_cast<size_t>(v)].height() ||
            pred[static_cast<size_t>(v)].width() != gt.depths[static_cast<size_t>(v)].width())
            throw ContractError("geometric_consistency: prediction resolution mismatch");

    std::vector<DepthMap> aligned;
    aligned.reserve(pred.size());
    for (size_t v = 0; v < pred.size(); ++v)
        aligned.push_back(align ? apply_scale_bias(pred[v],
                                                   fit_depth_scale_bias(pred[v], gt.depths[v]))
                                : pred[v]);

    const int n = gt.n_views();
    std::vector<GConsisPair> out;
    for (int i = 0; i < n; ++i) {
        const Camera& cam_i = gt.cameras[static_cast<size_t>(i)];
        const DepthMap& gt_i = gt.depths[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const Camera& cam_j = gt.cameras[static_cast<size_t>(j)];
            const DepthMap& gt_j = gt.depths[static_cast<size_t>(j)];
            GConsisPair pair;
            pair.src = i;
            pair.dst = j;

            const CorrespondenceField corr =
                compute_correspondences(gt_i, cam_i, gt_j, cam_j, occl_thresh);
            for (int y = 0; y < corr.height; ++y) {
                for (int x = 0; x < corr.width; ++x) {
                    if (!corr.valid(y, x)) continue;
                    const float dp_src = aligned[static_cast<size_t>(i)].at(y, x);
                    if (!(dp_src > 0)) continue;
                    const int px = static_cast<int>(std::lround(corr.u_at(y, x)));
                    const int py = static_cast<int>(std::lround(corr.v_at(y, x)));
                    const float dp_dst = aligned[static_cast<size_t>(j)].at(py, px);
                    if (!(dp_dst > 0)) continue;

                    // Lift the source pixel along its ray at predicted and
                    // at GT depth; both become depths in the destination
                    // camera.  Differencing against the same GT transport
                    // cancels the resampling offset, so pred = GT scores 0
                    // exactly.
                    const Projection zp =
                        project(cam_j, unproject(cam_i, x, y, dp_src));
                    const Projection zg =
                        project(cam_j, unproject(cam_i, x, y, gt_i.at(y, x)));
                    if (!zp.in_front || !zg.in_front) continue;
                    const double residual =
                        (zp.depth - dp_dst) - (zg.depth - gt_j.at(py, px));
                    pair.sum_abs += std::abs(residual);
                    pair.n_points += 1;
                }
            }
            out.push_back(pair);
        }
    }
    return out;
}

std::optional<double> geometric_consistency(const std::vector<DepthMap>& pred,
                                            const ViewSet& gt, bool align,
                                            double occl_thresh) {
    double sum = 0;
    int64_t n = 0;
    for (const GConsisPair& p : gconsis_pairs(pred, gt, align, occl_thresh)) {
        sum += p.sum_abs;
        n += p.n_points;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

DepthAccuracy absrel_delta1(const DepthMap& pred, const DepthMap& gt, bool align) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw ContractError("absrel_delta1: shape mismatch");

    const DepthMap aligned =
        align ? apply_scale_bias(pred, fit_depth_scale_bias(pred, gt)) : pred;

    double absrel = 0;
    int64_t n = 0, n_delta = 0;
    for (int y = 0; y < gt.height(); ++y)
        for (int x = 0; x < gt.width(); ++x) {
            if (!pred.valid(y, x) || !gt.valid(y, x)) continue;
            const double p = aligned.at(y, x), g = gt.at(y, x);
            absrel += std::abs(p - g) / g;
            if (p > 0 && std::max(p / g, g / p) < 1.25) ++n_delta;  // strict
            ++n;
        }
    if (n == 0) throw ContractError("absrel_delta1: no shared valid pixels");
    return {absrel / static_cast<double>(n),
            100.0 * static_cast<double>(n_delta) / static_cast<double>(n)};
}

int count_correspondences(const Image& a, const Image& b, const Matcher& matcher) {
    if (!a.same_shape(b)) throw ContractError("count_correspondences: shape mismatch");
    return matcher.count_matches(a, b);
}

MetricReport evaluate_restoration(const ViewSet& restored, const ViewSet& gt,
                                  const PerceptualBackend& backend, const Matcher& matcher,
                                  const VConsisOptions& opt) {
    require_aligned_viewsets(restored, gt, "evaluate_restoration");

    MetricReport report;
    report.scene_id = gt.scene_id;
    report.task = "restoration";

    std::vector<std::optional<double>> psnrs, ssims;
    for (int v = 0; v < gt.n_views(); ++v) {
        ViewMetrics vm;
        vm.view = v;
        vm.psnr = psnr(restored.images[static_cast<size_t>(v)],
                       gt.images[static_cast<size_t>(v)]);
        vm.ssim = ssim(restored.images[static_cast<size_t>(v)],
                       gt.images[static_cast<size_t>(v)]);
        report.views.push_back(vm);
        psnrs.emplace_back(vm.psnr);
        ssims.emplace_back(vm.ssim);
    }
    report.psnr = mean_of_defined(psnrs);
    report.ssim = mean_of_defined(ssims);

    std::vector<std::optional<double>> vcs, corrs;
    for (const VConsisPair& p : vconsis_pairs(restored, gt, backend, opt)) {
        PairMetrics pm;
        pm.src = p.src;
        pm.dst = p.dst;
        pm.n_vconsis_patches = p.n_kept;
        if (p.n_kept > 0) pm.vconsis = 100.0 * p.sum / p.n_kept;  // table convention
        pm.n_correspondences =
            count_correspondences(restored.images[static_cast<size_t>(p.src)],
                                  restored.images[static_cast<size_t>(p.dst)], matcher);
        vcs.push_back(pm.vconsis);
        corrs.emplace_back(static_cast<double>(pm.n_correspondences));
        report.pairs.push_back(pm);
    }
    report.vconsis = mean_of_defined(vcs);
    report.mean_correspondences = mean_of_defined(corrs);
    return report;
}

MetricReport evaluate_depth(const std::vector<DepthMap>& pred, const ViewSet& gt, bool align,
                            double occl_thresh) {
    MetricReport report;
    report.scene_id = gt.scene_id;
    report.task = "depth";
    if (static_cast<int>(pred.size()) != gt.n_views() || !gt.has_depths())
        throw ContractError("evaluate_depth: prediction/view count mismatch");

    std::vector<std::optional<double>> absrels, deltas;
    for (int v = 0; v < gt.n_views(); ++v) {
        const DepthAccuracy acc = absrel_delta1(pred[static_cast<size_t>(v)],
                                                gt.depths[static_cast<size_t>(v)], align);
        DepthViewMetrics dm;
        dm.view = v;
        dm.absrel = acc.absrel;
        dm.delta1 = acc.delta1;
        report.depth_views.push_back(dm);
        absrels.emplace_back(acc.absrel);
        deltas.emplace_back(acc.delta1);
    }
    report.absrel = mean_of_defined(absrels);
    report.delta1 = mean_of_defined(deltas);

    std::vector<std::optional<double>> gcs;
    for (const GConsisPair& p : gconsis_pairs(pred, gt, align, occl_thresh)) {
        PairMetrics pm;
        pm.src = p.src;
        pm.dst = p.dst;
        if (p.n_points > 0) pm.gconsis = p.sum_abs / static_cast<double>(p.n_points);
        gcs.push_back(pm.gconsis);
        report.pairs.push_back(pm);
    }
    report.gconsis = mean_of_defined(gcs);
    return report;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

}  // namespace

std::string report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["scene_id"] = report.scene_id;
    j["task"] = report.task;

    j["views"] = nlohmann::json::array();
    for (const ViewMetrics& v : report.views)
        j["views"].push_back({{"view", v.view}, {"psnr", v.psnr}, {"ssim", v.ssim}});

    j["depth_views"] = nlohmann::json::array();
    for (const DepthViewMetrics& v : report.depth_views)
        j["depth_views"].push_back(
            {{"view", v.view}, {"absrel", v.absrel}, {"delta1", v.delta1}});

    j["pairs"] = nlohmann::json::array();
    for (const PairMetrics& p : report.pairs)
        j["pairs"].push_back({{"src", p.src},
                              {"dst", p.dst},
                              {"vconsis", opt_json(p.vconsis)},
                              {"gconsis", opt_json(p.gconsis)},
                              {"n_vconsis_patches", p.n_vconsis_patches},
                              {"n_correspondences", p.n_correspondences}});

    j["psnr"] = opt_json(report.psnr);
    j["ssim"] = opt_json(report.ssim);
    j["vconsis"] = opt_json(report.vconsis);
    j["gconsis"] = opt_json(report.gconsis);
    j["absrel"] = opt_json(report.absrel);
    j["delta1"] = opt_json(report.delta1);
    j["mean_correspondences"] = opt_json(report.mean_correspondences);
    return j.dump(2) + "\n";
}

}  // namespace mvr
