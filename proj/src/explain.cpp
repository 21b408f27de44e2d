#include "ssa/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ssa {

Heatmap cam_from(const TensorD& activation, const TensorD& gradient, std::size_t out_h, std::size_t out_w) {
    require_same_shape(activation.shape(), gradient.shape(), "grad_cam capture");
    const Shape& s = activation.shape();
    if (s.n != 1) throw DimensionError("grad_cam expects a single sample, got " + s.str());

    TensorD raw(Shape{1, 1, s.h, s.w});
    const std::size_t P = s.plane();
    for (std::size_t k = 0; k < s.c; ++k) {
        const double* g = gradient.plane(0, k);
        double wk = 0.0;
        for (std::size_t i = 0; i < P; ++i) wk += g[i];
        wk /= static_cast<double>(P);
        const double* a = activation.plane(0, k);
        double* r = raw.ptr();
        for (std::size_t i = 0; i < P; ++i) r[i] += wk * a[i];
    }
    for (auto& v : raw.data()) v = std::max(v, 0.0);

    Heatmap hm;
    hm.source_h = s.h;
    hm.source_w = s.w;
    hm.values = (s.h == out_h && s.w == out_w) ? raw : bilinear_resize(raw, out_h, out_w);
    auto [lo, hi] = std::minmax_element(hm.values.data().begin(), hm.values.data().end());
    const double min = *lo;
    const double max = *hi;
    if (!(max > min)) {
        hm.values.fill(0.0);
        hm.all_zero = true;
        return hm;
    }
    for (auto& v : hm.values.data()) v = (v - min) / (max - min);
    return hm;
}

template <typename T>
std::vector<Heatmap> grad_cam(SSAUNet<T>& model, const BasicTensor<T>& input, const std::vector<std::string>& layers,
                              const CamTarget& target) {
    const auto available = model.layer_names();
    for (const auto& layer : layers) {
        if (std::find(available.begin(), available.end(), layer) == available.end()) {
            std::string list;
            for (const auto& n : available) list += "\n  " + n;
            throw ConfigError("unknown layer '" + layer + "'; available layers:" + list);
        }
    }
    if (input.shape().n != 1) throw DimensionError("grad_cam expects one sample, got " + input.shape().str());

    std::vector<Capture<T>> caps(layers.size());
    Pass<T> pass{Mode::Eval, true, {}};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        caps[i].layer = layers[i];
        pass.captures.push_back(&caps[i]);
    }
    const BasicTensor<T> out = model.forward(input, pass);
    const std::size_t frames = out.shape().c;
    const std::size_t frame = target.frame.value_or(frames - 1);
    if (frame >= frames) {
        throw ConfigError("output frame " + std::to_string(frame) + " out of range (model has " +
                          std::to_string(frames) + " outputs)");
    }
    BasicTensor<T> seed(out.shape());
    std::fill_n(seed.plane(0, frame), out.shape().plane(), static_cast<T>(target.scale));
    model.backward(seed);
    model.zero_grad();

    std::vector<Heatmap> maps;
    for (auto& cap : caps) {
        if (!cap.seen_forward || !cap.seen_backward) {
            throw UsageError("layer '" + cap.layer + "' produced no activation or gradient");
        }
        Heatmap hm = cam_from(cap.activation.template cast<double>(), cap.gradient.template cast<double>(),
                              input.shape().h, input.shape().w);
        hm.layer = cap.layer;
        maps.push_back(std::move(hm));
    }
    return maps;
}

template <typename T>
Heatmap grad_cam(SSAUNet<T>& model, const BasicTensor<T>& input, const std::string& layer, const CamTarget& target) {
    return std::move(grad_cam(model, input, std::vector<std::string>{layer}, target).front());
}

template std::vector<Heatmap> grad_cam(SSAUNet<float>&, const Tensor&, const std::vector<std::string>&,
                                       const CamTarget&);
template std::vector<Heatmap> grad_cam(SSAUNet<double>&, const TensorD&, const std::vector<std::string>&,
                                       const CamTarget&);
template Heatmap grad_cam(SSAUNet<float>&, const Tensor&, const std::string&, const CamTarget&);
template Heatmap grad_cam(SSAUNet<double>&, const TensorD&, const std::string&, const CamTarget&);

std::vector<SweepLayer> default_sweep_layers() {
    std::vector<SweepLayer> out;
    for (std::size_t k = 1; k <= 5; ++k) {
        const std::string lvl = "encoder.level" + std::to_string(k);
        const std::string tag = ".enc" + std::to_string(k);
        out.push_back({"block" + tag, lvl});
        out.push_back({"conv1" + tag, lvl + ".conv1"});
        out.push_back({"conv2" + tag, lvl + ".conv2"});
        out.push_back({"attention" + tag, lvl + ".attention"});
    }
    for (std::size_t k = 1; k <= 4; ++k) {
        out.push_back({"block.dec" + std::to_string(k), "decoder.level" + std::to_string(k)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// PGM

std::uint8_t quantize(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

namespace {

void write_gray(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

template <typename T>
GrayImage to_gray(const BasicTensor<T>& map) {
    const Shape& s = map.shape();
    if (s.n != 1 || s.c != 1) throw DimensionError("PGM output needs a single (1, 1, h, w) map, got " + s.str());
    GrayImage img{s.w, s.h, {}};
    img.pixels.reserve(s.plane());
    for (T v : map.data()) img.pixels.push_back(quantize(static_cast<double>(v)));
    return img;
}

}  // namespace

void write_pgm(const TensorD& map, const std::filesystem::path& path) { write_gray(to_gray(map), path); }
void write_pgm(const Tensor& map, const std::filesystem::path& path) { write_gray(to_gray(map), path); }

GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 255 || w == 0 || h == 0) throw FormatError("not an 8-bit P5 PGM: " + path.string());
    in.get();  // single whitespace after the header
    GrayImage img{w, h, std::vector<std::uint8_t>(w * h)};
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) throw FormatError("truncated PGM: " + path.string());
    return img;
}

void write_composite(const std::vector<TensorD>& panels, const std::filesystem::path& path) {
    if (panels.empty()) throw UsageError("composite needs at least one panel");
    constexpr std::size_t gutter = 2;
    const std::size_t h = panels.front().shape().h;
    std::size_t width = 0;
    for (const auto& p : panels) {
        if (p.shape().h != h || p.shape().n != 1 || p.shape().c != 1) {
            throw DimensionError("composite panels must be (1, 1, " + std::to_string(h) + ", w), got " +
                                 p.shape().str());
        }
        width += p.shape().w;
    }
    width += gutter * (panels.size() - 1);
    GrayImage img{width, h, std::vector<std::uint8_t>(width * h, 0)};
    std::size_t x0 = 0;
    for (const auto& p : panels) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < p.shape().w; ++x) img.pixels[y * width + x0 + x] = quantize(p(0, 0, y, x));
        }
        x0 += p.shape().w + gutter;
    }
    write_gray(img, path);
}

}  // namespace ssa
