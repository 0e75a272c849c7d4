#include "solo/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "solo/errors.hpp"
#include "solo/manifest.hpp"

namespace solo {

std::vector<EpochMetrics> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "epoch,train_loss,val_loss,val_accuracy,lr_last")
    raise(ErrorKind::Format, "unexpected metrics CSV header in " + path);
  std::vector<EpochMetrics> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5)
      raise(ErrorKind::Format, "expected 5 fields at " + path + ":" +
                                   std::to_string(line_no));
    try {
      EpochMetrics em;
      em.epoch = std::stoi(fields[0]);
      em.train_loss = std::stod(fields[1]);
      em.val_loss = std::stod(fields[2]);
      em.val_accuracy = std::stod(fields[3]);
      em.lr_last = std::stod(fields[4]);
      out.push_back(em);
    } catch (const std::exception&) {
      raise(ErrorKind::Format, "non-numeric metrics at " + path + ":" +
                                   std::to_string(line_no));
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_summary_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open summary file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2)
      raise(ErrorKind::Format, "expected 2 fields at " + path + ":" +
                                   std::to_string(line_no));
    if (line_no == 1 && fields[0] == "metric") continue;  // optional header
    out.emplace_back(fields[0], fields[1]);
  }
  return out;
}

std::string render_text_report(
    const std::vector<EpochMetrics>& log,
    const std::vector<std::pair<std::string, std::string>>& summary) {
  std::ostringstream out;
  if (!log.empty()) {
    out << "epoch  train_loss  val_loss  val_accuracy  lr_last\n";
    char buf[128];
    const EpochMetrics* best = &log.front();
    for (const EpochMetrics& em : log) {
      std::snprintf(buf, sizeof(buf), "%5d  %10.6f  %8.6f  %12.6f  %.3e\n",
                    em.epoch, em.train_loss, em.val_loss, em.val_accuracy,
                    em.lr_last);
      out << buf;
      if (em.val_accuracy > best->val_accuracy) best = &em;
    }
    std::snprintf(buf, sizeof(buf),
                  "\nbest epoch: %d (val accuracy %.6f)\n", best->epoch,
                  best->val_accuracy);
    out << buf;
  }
  if (!summary.empty()) {
    out << "\nsummary\n";
    std::size_t width = 0;
    for (const auto& [k, v] : summary) width = std::max(width, k.size());
    for (const auto& [k, v] : summary)
      out << "  " << k << std::string(width - k.size() + 2, ' ') << v << "\n";
  }
  if (log.empty() && summary.empty()) out << "nothing to report\n";
  return out.str();
}

namespace {

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                     const char* color) {
  std::ostringstream p;
  p << "  <polyline fill=\"none\" stroke=\"" << color
    << "\" stroke-width=\"2\" points=\"";
  char buf[48];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", xs[i], ys[i]);
    p << buf;
  }
  p << "\"/>\n";
  return p.str();
}

}  // namespace

std::string render_svg_report(const std::vector<EpochMetrics>& log) {
  const double w = 840, h = 360;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
      << "\">\n"
      << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (log.empty()) {
    svg << "  <text x=\"20\" y=\"40\" font-family=\"monospace\" font-size=\"16\">"
           "no epochs logged</text>\n</svg>\n";
    return svg.str();
  }

  // Two panels: losses on the left, validation accuracy on the right.
  const double pad = 45, pw = w / 2 - 2 * pad, ph = h - 2 * pad;
  double max_loss = 1e-9;
  for (const EpochMetrics& em : log)
    max_loss = std::max({max_loss, em.train_loss, em.val_loss});
  const double x0 = pad, x1 = w / 2 + pad;
  auto ex = [&](std::size_t i, double left) {
    return log.size() == 1
               ? left + pw / 2
               : left + pw * static_cast<double>(i) /
                            static_cast<double>(log.size() - 1);
  };

  std::vector<double> xs_l, ys_train, ys_val, xs_r, ys_acc;
  for (std::size_t i = 0; i < log.size(); ++i) {
    xs_l.push_back(ex(i, x0));
    ys_train.push_back(pad + ph * (1.0 - log[i].train_loss / max_loss));
    ys_val.push_back(pad + ph * (1.0 - log[i].val_loss / max_loss));
    xs_r.push_back(ex(i, x1));
    ys_acc.push_back(pad + ph * (1.0 - log[i].val_accuracy));
  }

  for (double left : {x0, x1})
    svg << "  <rect x=\"" << left << "\" y=\"" << pad << "\" width=\"" << pw
        << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";
  svg << polyline(xs_l, ys_train, "#1f77b4") << polyline(xs_l, ys_val, "#d62728")
      << polyline(xs_r, ys_acc, "#2ca02c");
  svg << "  <text x=\"" << x0 << "\" y=\"" << pad - 12
      << "\" font-family=\"monospace\" font-size=\"14\">loss by epoch "
         "(blue: train, red: val; top = "
      << max_loss << ")</text>\n";
  svg << "  <text x=\"" << x1 << "\" y=\"" << pad - 12
      << "\" font-family=\"monospace\" font-size=\"14\">val accuracy by epoch "
         "(0..1)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace solo
