#include "satinfra/judge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace satinfra::judge {

namespace {

template <class T>
std::optional<double> ratio(std::span<const T> predicted, std::span<const T> reference) {
  if (predicted.size() != reference.size())
    throw nn::ShapeError("validity_index: mask sizes differ");
  double p = 0.0, r = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    p += predicted[i];
    r += reference[i];
  }
  if (!(r > 0.0)) return std::nullopt;
  return p / r;
}

}  // namespace

std::optional<double> validity_index(std::span<const float> predicted,
                                     std::span<const float> reference) {
  return ratio(predicted, reference);
}

std::optional<double> validity_index(std::span<const double> predicted,
                                     std::span<const double> reference) {
  return ratio(predicted, reference);
}

std::optional<double> validity_index(const raster::MaskRaster& predicted,
                                     const raster::MaskRaster& reference) {
  if (!predicted.same_geometry(reference)) throw nn::ShapeError("validity_index: mask sizes differ");
  return ratio<float>(predicted.values, reference.values);
}

FilterReport filter_scores(const std::vector<std::string>& ids,
                           const std::vector<std::optional<double>>& alphas,
                           const FilterOptions& opts) {
  if (ids.size() != alphas.size()) throw std::invalid_argument("filter_scores: size mismatch");
  FilterReport rep;
  rep.alpha_max = opts.alpha_max;
  rep.entries.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const bool keep = alphas[i] ? !(*alphas[i] > opts.alpha_max) : !opts.drop_undefined;
    rep.undefined += !alphas[i];
    rep.entries.push_back({ids[i], alphas[i], keep});
    (keep ? rep.kept : rep.dropped).push_back(i);
  }
  return rep;
}

FilterReport filter_dataset(std::span<const MaskPair> pairs, const FilterOptions& opts) {
  if (pairs.empty()) throw std::invalid_argument("filter_dataset: no pairs");
  std::vector<std::string> ids;
  std::vector<std::optional<double>> alphas;
  for (const MaskPair& p : pairs) {
    ids.push_back(p.id);
    alphas.push_back(validity_index(p.predicted, p.reference));
  }
  return filter_scores(ids, alphas, opts);
}

double calibrate_alpha_max(const std::vector<std::optional<double>>& alphas,
                           double target_drop_fraction) {
  if (!(target_drop_fraction >= 0.0 && target_drop_fraction <= 1.0))
    throw std::invalid_argument("calibrate_alpha_max: target must be in [0, 1]");
  std::vector<double> defined;
  for (const auto& a : alphas)
    if (a) defined.push_back(*a);
  if (defined.empty()) return kDefaultAlphaMax;
  std::sort(defined.begin(), defined.end(), std::greater<>());
  const long want = std::lround(target_drop_fraction * static_cast<double>(alphas.size()));
  const long from_defined = std::clamp<long>(want - static_cast<long>(alphas.size() - defined.size()), 0,
                                             static_cast<long>(defined.size()));
  const std::size_t k = static_cast<std::size_t>(from_defined);
  if (k == 0) return defined.front();
  if (k == defined.size()) return std::nextafter(defined.back(), -HUGE_VAL);
  return (defined[k - 1] + defined[k]) / 2.0;
}

void write_filter_report(const FilterReport& report, const std::filesystem::path& path,
                         const std::string& preamble) {
  std::ofstream out(path);
  if (!out) throw raster::IoError("cannot write " + path.string());
  if (!preamble.empty()) out << preamble << '\n';
  out << "cell_id,alpha,kept\n";
  out.precision(17);
  for (const PairScore& e : report.entries) {
    out << e.id << ',';
    if (e.alpha) out << *e.alpha;
    out << ',' << (e.kept ? 1 : 0) << '\n';
  }
  out << "# summary total=" << report.entries.size() << " kept=" << report.kept.size()
      << " dropped=" << report.dropped.size() << " undefined=" << report.undefined
      << " drop_fraction=" << report.drop_fraction() << " alpha_max=" << report.alpha_max << '\n';
  if (!out) throw raster::IoError("write failed: " + path.string());
}

IterativeResult iterative_filter_train(const std::vector<LabeledSample>& dataset,
                                       const IterativeOptions& options) {
  if (options.rounds < 1) throw std::invalid_argument("iterative_filter_train: rounds must be >= 1");
  if (dataset.empty()) throw std::invalid_argument("iterative_filter_train: empty dataset");

  std::vector<std::size_t> kept(dataset.size());
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;

  auto train_on = [&](const std::vector<std::size_t>& idx, IterativeResult* res) {
    std::vector<nn::Sample> samples;
    samples.reserve(idx.size());
    for (std::size_t i : idx) samples.push_back(dataset[i].sample);
    nn::Network net(options.network);
    nn::TrainingLog log = nn::train(net, samples, options.training);
    if (res) res->logs.push_back(std::move(log));
    return net;
  };

  IterativeResult result{nn::Network(options.network), {}, {}, {}};
  result.network = train_on(kept, &result);

  bool last_round_dropped = false;
  for (int round = 0; round < options.rounds; ++round) {
    if (round > 0 && last_round_dropped) result.network = train_on(kept, &result);
    std::vector<const nn::Tensor*> images;
    for (std::size_t i : kept) images.push_back(&dataset[i].sample.image);
    const std::vector<nn::Tensor> probs = nn::predict(result.network, images, options.predict_batch);
    std::vector<std::string> ids;
    std::vector<std::optional<double>> alphas;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      ids.push_back(dataset[kept[k]].id);
      alphas.push_back(validity_index(probs[k].data(), dataset[kept[k]].sample.target.data()));
    }
    FilterReport rep = filter_scores(ids, alphas, options.filter);
    if (rep.kept.empty())
      throw JudgeError("iterative_filter_train: round " + std::to_string(round + 1) +
                       " dropped every sample (alpha_max=" + std::to_string(options.filter.alpha_max) +
                       ")");
    std::vector<std::size_t> next;
    for (std::size_t k : rep.kept) next.push_back(kept[k]);
    last_round_dropped = next.size() != kept.size();
    kept = std::move(next);
    result.history.push_back(std::move(rep));
  }
  if (last_round_dropped) result.network = train_on(kept, &result);
  for (std::size_t i : kept) result.final_kept.push_back(dataset[i].id);
  return result;
}

}  // namespace satinfra::judge
