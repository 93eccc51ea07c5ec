#include "xld/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace xld {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 150, kTop = 40, kBottom = 48;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};

}  // namespace

std::string render_svg(const std::string& title, const std::vector<Series>& series) {
  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (x_min > x_max) x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  if (x_max == x_min) x_max = x_min + 1;
  y_min = std::min(0.0, y_min);
  if (y_max <= y_min) y_max = y_min + 1;
  y_max *= 1.05;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(title) << "</text>\n";

  // Axes and ticks.
  o << "<g stroke=\"#333\" fill=\"none\">\n";
  o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(kLeft + pw)
    << "\" y2=\"" << num(kTop + ph) << "\"/>\n";
  o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft)
    << "\" y2=\"" << num(kTop + ph) << "\"/>\n";
  o << "</g>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = y_min + (y_max - y_min) * i / 5.0;
    o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py(y)) << "\" x2=\"" << num(kLeft + pw)
      << "\" y2=\"" << num(py(y)) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(y) + 4)
      << "\" text-anchor=\"end\">" << label_num(y) << "</text>\n";
  }
  const int x_ticks = static_cast<int>(std::min(10.0, x_max - x_min));
  for (int i = 0; i <= x_ticks; ++i) {
    const double x = x_min + (x_max - x_min) * i / std::max(1, x_ticks);
    o << "<text x=\"" << num(px(x)) << "\" y=\"" << num(kTop + ph + 16)
      << "\" text-anchor=\"middle\">" << label_num(std::round(x * 100) / 100) << "</text>\n";
  }
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10)
    << "\" text-anchor=\"middle\">epoch</text>\n";
  o << "<text x=\"16\" y=\"" << num(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num(kTop + ph / 2) << ")\">loss</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* dash = s.dashed ? " stroke-dasharray=\"6 4\"" : "";
    o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\"" << dash
      << " points=\"";
    for (std::size_t j = 0; j < s.points.size(); ++j) {
      o << (j ? " " : "") << num(px(s.points[j].first)) << ',' << num(py(s.points[j].second));
    }
    o << "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << num(kLeft + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(kLeft + pw + 32) << "\" y2=\"" << num(ly) << "\" stroke=\"" << s.color
      << "\" stroke-width=\"2\"" << dash << "/>\n";
    o << "<text x=\"" << num(kLeft + pw + 38) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> emit_loss_curves(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> csvs;
  if (fs::is_directory(run_dir)) {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") {
        std::ifstream in(entry.path());
        std::string header;
        std::getline(in, header);
        if (header == kEpochCsvHeader) csvs.push_back(entry.path());
      }
    }
  }
  if (csvs.empty()) throw std::runtime_error("no epoch CSV in " + run_dir.string());
  std::sort(csvs.begin(), csvs.end());

  std::map<std::pair<std::string, double>, std::vector<EpochRecord>> groups;
  for (const auto& path : csvs) {
    for (const auto& r : read_epoch_csv(path)) groups[{phase_name(r.phase), r.alpha}].push_back(r);
  }
  const fs::path out_dir = run_dir / "charts";
  fs::create_directories(out_dir);
  for (const auto& path : csvs) {
    fs::copy_file(path, out_dir / path.filename(), fs::copy_options::overwrite_existing);
  }

  auto write = [](const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << body;
  };
  std::vector<fs::path> written;
  std::vector<Series> combined;
  std::size_t color = 0;
  for (const auto& [key, records] : groups) {
    Series train{"train", "#1f77b4", {}}, val{"validation", "#d62728", {}, true};
    for (const auto& r : records) {
      train.points.emplace_back(static_cast<double>(r.epoch), r.train_loss);
      val.points.emplace_back(static_cast<double>(r.epoch), r.val_loss);
    }
    const std::string a = label_num(key.second);
    const fs::path chart = out_dir / ("loss_" + key.first + "_alpha_" + a + ".svg");
    write(chart, render_svg(key.first + ", alpha = " + a, {train, val}));
    written.push_back(chart);

    const char* c = kPalette[color++ % std::size(kPalette)];
    combined.push_back({"a=" + a + " train", c, train.points});
    combined.push_back({"a=" + a + " val", c, val.points, true});
  }
  if (groups.size() > 1) {
    const fs::path chart = out_dir / "loss_combined.svg";
    write(chart, render_svg("training and validation loss", combined));
    written.push_back(chart);
  }
  return written;
}

}  // namespace xld
