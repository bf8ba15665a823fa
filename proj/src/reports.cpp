#include "weldood/reports.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace weldood {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

std::string format_training_history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "index,phase,ar_epoch,train_loss,val_loss,val_accuracy\n";
  for (const EpochRecord& r : history) {
    out << r.index << ',' << to_string(r.phase) << ',' << r.ar_epoch << ',' << format_number(r.train_loss) << ','
        << format_number(r.val_loss) << ',' << format_number(r.val_accuracy) << '\n';
  }
  return out.str();
}

std::string format_vq_history_csv(const std::vector<VqEpochRecord>& trace) {
  std::ostringstream out;
  out << "epoch,train_loss,train_recon,val_recon\n";
  for (const VqEpochRecord& r : trace) {
    out << r.epoch << ',' << format_number(r.train_loss) << ',' << format_number(r.train_recon) << ','
        << format_number(r.val_recon) << '\n';
  }
  return out.str();
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : "undefined"; }

// Mean and sample standard deviation of the defined values.
std::pair<std::optional<double>, std::optional<double>> mean_std(const std::vector<std::optional<double>>& values) {
  std::vector<double> xs;
  for (const auto& v : values) {
    if (v) xs.push_back(*v);
  }
  if (xs.empty()) return {std::nullopt, std::nullopt};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return {mean, sd};
}

}  // namespace

std::string format_benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream out;
  out << "row,seed,method,metric,beta,theta,id_accepted,id_total,ood_accepted,ood_total,id_value,ood_value,"
         "ood_score,auroc\n";
  // Group keys in first-appearance order.
  std::vector<std::pair<std::string, MetricKind>> keys;
  std::map<std::pair<std::string, int>, std::vector<const BenchmarkRow*>> groups;
  for (const BenchmarkRow& r : rows) {
    out << "seed," << r.seed << ',' << r.method << ',' << to_string(r.metric) << ',' << format_number(r.beta) << ','
        << format_number(r.theta) << ',' << r.id_accepted << ',' << r.id_total << ',' << r.ood_accepted << ','
        << r.ood_total << ',' << format_number(r.id_value) << ',' << format_number(r.ood_value) << ','
        << cell(r.ood_score) << ',' << cell(r.auroc) << '\n';
    const auto key = std::make_pair(r.method, static_cast<int>(r.metric));
    if (!groups.contains(key)) keys.emplace_back(r.method, r.metric);
    groups[key].push_back(&r);
  }
  for (const auto& [method, metric] : keys) {
    const auto& g = groups[{method, static_cast<int>(metric)}];
    std::vector<std::optional<double>> id, ood, score, auc;
    for (const BenchmarkRow* r : g) {
      id.emplace_back(r->id_value);
      ood.emplace_back(r->ood_value);
      score.push_back(r->ood_score);
      auc.push_back(r->auroc);
    }
    const auto [id_m, id_s] = mean_std(id);
    const auto [ood_m, ood_s] = mean_std(ood);
    const auto [sc_m, sc_s] = mean_std(score);
    const auto [au_m, au_s] = mean_std(auc);
    const std::string beta = format_number(g.front()->beta);
    const std::string prefix = "," + method + "," + to_string(metric) + "," + beta + ",,,,,,";
    out << "mean," << g.size() << prefix << cell(id_m) << ',' << cell(ood_m) << ',' << cell(sc_m) << ','
        << cell(au_m) << '\n';
    out << "std," << g.size() << prefix << cell(id_s) << ',' << cell(ood_s) << ',' << cell(sc_s) << ','
        << cell(au_s) << '\n';
  }
  return out.str();
}

std::string format_metric_rows_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "dataset,method,metric,value\n";
  for (const MetricRow& r : rows) {
    out << r.dataset << ',' << r.method << ',' << r.metric << ',' << format_number(r.value) << '\n';
  }
  return out.str();
}

std::string format_deployment_csv(const std::vector<DeploymentReport>& reports) {
  std::ostringstream out;
  out << "strategy,method,scope,theta,experience,regime,f1,accuracy,triggered,flagged_fraction,mean_score,"
         "labels_consumed\n";
  for (const DeploymentReport& rep : reports) {
    for (const ExperienceRecord& r : rep.records) {
      out << to_string(rep.strategy) << ',' << to_string(rep.method) << ',' << to_string(rep.scope) << ','
          << format_number(rep.theta) << ',' << r.index << ',' << r.regime_tag << ',' << format_number(r.f1) << ','
          << format_number(r.accuracy) << ',' << (r.triggered ? 1 : 0) << ',' << format_number(r.flagged_fraction)
          << ',' << format_number(r.mean_score) << ',' << r.labels_consumed_cumulative << '\n';
    }
  }
  return out.str();
}

std::string render_deployment_svg(const std::vector<DeploymentReport>& reports) {
  constexpr double kWidth = 820, kHeight = 380, kLeft = 60, kRight = 150, kTop = 30, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  std::size_t n = 0;
  for (const auto& r : reports) n = std::max(n, r.records.size());
  const double step = n > 1 ? plot_w / static_cast<double>(n - 1) : plot_w;
  const auto x_of = [&](std::size_t i) { return kLeft + step * static_cast<double>(i); };
  const auto y_of = [&](double f1) { return kTop + plot_h * (1.0 - f1); };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (const DeploymentReport& rep : reports) {
    if (rep.strategy != Strategy::kOodReplay) continue;
    for (const ExperienceRecord& r : rep.records) {
      if (!r.triggered) continue;
      const double cx = x_of(static_cast<std::size_t>(r.index));
      svg << "<rect class=\"trigger\" data-experience=\"" << r.index << "\" x=\"" << num(cx - step / 2) << "\" y=\""
          << kTop << "\" width=\"" << num(step) << "\" height=\"" << plot_h
          << "\" fill=\"#2ca02c\" fill-opacity=\"0.18\"/>\n";
    }
  }

  // Axes and gridlines.
  for (int k = 0; k <= 4; ++k) {
    const double v = 0.25 * k;
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w << "\" y1=\"" << num(y_of(v)) << "\" y2=\""
        << num(y_of(v)) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(y_of(v) + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft << "\" y1=\"" << kTop << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w << "\" y1=\"" << kTop + plot_h << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    svg << "<text x=\"" << num(x_of(i)) << "\" y=\"" << kTop + plot_h + 16 << "\" text-anchor=\"middle\">" << i
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">experience</text>\n";
  svg << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 16 " << kTop + plot_h / 2
      << ")\" text-anchor=\"middle\">F1</text>\n";

  const char* colors[] = {"#7f7f7f", "#1f77b4", "#d62728"};
  for (std::size_t s = 0; s < reports.size(); ++s) {
    const DeploymentReport& rep = reports[s];
    const char* color = colors[static_cast<int>(rep.strategy) % 3];
    svg << "<polyline class=\"strategy\" data-strategy=\"" << to_string(rep.strategy) << "\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < rep.records.size(); ++i) {
      svg << (i ? " " : "") << num(x_of(i)) << ',' << num(y_of(rep.records[i].f1));
    }
    svg << "\"/>\n";
    const double ly = kTop + 14 + 18 * static_cast<double>(s);
    svg << "<line x1=\"" << kWidth - kRight + 12 << "\" x2=\"" << kWidth - kRight + 36 << "\" y1=\"" << ly
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kWidth - kRight + 42 << "\" y=\"" << ly + 4 << "\">" << to_string(rep.strategy)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace weldood
