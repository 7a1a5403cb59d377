#include "flowtrace/report_io.hpp"

#include "flowtrace/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace flowtrace {

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UsageError("cannot write to " + tmp.string());
        out << content;
        if (!out) throw UsageError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw UsageError("cannot rename " + tmp.string() + " to " + path);
}

std::string render_ifcurve_csv(const ExperimentSummary& summary) {
    std::ostringstream os;
    os << "k,mean_perstep_kl,cum_if_lowerbound,exact_if,epsilon_bound\n";
    for (size_t k = 0; k < summary.mean_perstep_kl.size(); ++k) {
        os << k << ',' << format_number(summary.mean_perstep_kl[k]) << ','
           << format_number(summary.cum_if_lowerbound[k]) << ',';
        if (summary.has_exact) os << format_number(summary.exact_if_curve[k]);
        os << ',';
        if (summary.has_epsilon) os << format_number(summary.epsilon_bound);
        os << '\n';
    }
    return os.str();
}

std::string render_roc_csv(const ExperimentSummary& summary) {
    std::ostringstream os;
    os << "k,alpha,beta,threshold,detector,scenario_id,seed\n";
    for (const auto& r : summary.roc) {
        os << r.k << ',' << format_number(r.alpha) << ',' << format_number(r.beta) << ','
           << format_number(r.threshold) << ',' << summary.detector_name << ','
           << summary.scenario_id << ',' << summary.seed << '\n';
    }
    return os.str();
}

std::string render_if_svg(const ExperimentSummary& summary) {
    const int width = 800, height = 480, pad = 50;
    const auto& curve = summary.cum_if_lowerbound;
    double ymax = summary.has_epsilon ? summary.epsilon_bound : 0.0;
    for (double v : curve) ymax = std::max(ymax, v);
    if (summary.has_exact) {
        for (double v : summary.exact_if_curve) ymax = std::max(ymax, v);
    }
    if (ymax <= 0.0) ymax = 1.0;
    const double xmax = static_cast<double>(curve.size() - 1);

    auto xpix = [&](double k) { return pad + k / std::max(xmax, 1.0) * (width - 2 * pad); };
    auto ypix = [&](double v) { return height - pad - v / ymax * (height - 2 * pad); };
    auto polyline = [&](const std::vector<double>& ys, const char* color) {
        std::ostringstream os;
        os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t k = 0; k < ys.size(); ++k) {
            os << format_number(xpix(static_cast<double>(k))) << ','
               << format_number(ypix(ys[k])) << ' ';
        }
        os << "\"/>\n";
        return os.str();
    };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\">\n";
    os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "  <line x1=\"" << pad << "\" y1=\"" << height - pad << "\" x2=\"" << width - pad
       << "\" y2=\"" << height - pad << "\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
       << height - pad << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << width / 2 << "\" y=\"" << height - 12
       << "\" font-size=\"12\" text-anchor=\"middle\">k</text>\n";
    os << "  <text x=\"14\" y=\"" << height / 2
       << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << height / 2 << ")\">IF_k</text>\n";
    os << "  <text x=\"" << width / 2 << "\" y=\"24\" font-size=\"13\" text-anchor=\"middle\">"
       << summary.scenario_id << " information flow</text>\n";
    os << polyline(curve, "#1f6fb2");
    if (summary.has_exact) os << polyline(summary.exact_if_curve, "#b2611f");
    if (summary.has_epsilon && summary.epsilon_bound > 0.0) {
        std::vector<double> eps(curve.size(), summary.epsilon_bound);
        os << polyline(eps, "#2e8b57");
    }
    os << "</svg>\n";
    return os.str();
}

std::string render_summary_text(const ExperimentSummary& summary) {
    std::ostringstream os;
    os << "scenario:        " << summary.scenario_id << "\n"
       << "horizon:         " << summary.horizon << "\n"
       << "trials:          " << summary.trials << "\n"
       << "seed:            " << summary.seed << "\n"
       << "detector:        " << summary.detector_name << "\n"
       << "IF lower bound:  " << format_number(summary.aggregate.lower_bound_if) << "\n";
    if (summary.aggregate.exact_if) {
        os << "IF exact:        " << format_number(*summary.aggregate.exact_if) << "\n";
    }
    if (summary.has_epsilon) {
        os << "epsilon bound:   " << format_number(summary.epsilon_bound) << "\n"
           << "W convention:    closed-loop prediction covariance"
           << (summary.watermarked ? " (watermarked)" : "") << "\n";
    }
    if (summary.decay) {
        os << "alpha decay:     " << format_number(*summary.decay) << "\n";
    }
    os << "J*:              " << format_number(summary.J_star) << "\n";
    if (summary.watermarked) {
        os << "J (watermark):   " << format_number(summary.J_watermarked) << "\n"
           << "deltaJ/J*:       " << format_number(summary.deltaJ_ratio) << "\n"
           << "Q multiplier:    " << format_number(summary.q_multiplier) << "\n";
    }
    return os.str();
}

} // namespace flowtrace
