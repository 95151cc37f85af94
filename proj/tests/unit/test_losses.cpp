#include <doctest.h>

#include "pugs/core/error.hpp"
#include "pugs/loss/losses.hpp"
#include "test_support.hpp"

using namespace pugs;
using namespace pugs::loss;

namespace {

ImageF random_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageF img(w, h, c);
  for (double& v : img.data) v = u(rng);
  return img;
}

/// Direct 2D-window SSIM (zero padding), written without the separable blur.
double ssim_reference(const ImageF& a, const ImageF& b) {
  double kernel[11][11];
  double ksum = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      kernel[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      ksum += kernel[i][j];
    }
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    double chan = 0.0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const int yy = y + i - 5, xx = x + j - 5;
            if (yy < 0 || xx < 0 || yy >= a.height || xx >= a.width) continue;
            const double k = kernel[i][j] / ksum, va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        const double c1 = 1e-4, c2 = 9e-4;
        chan += (2 * ma * mb + c1) * (2 * (sab - ma * mb) + c2) /
                ((ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2));
      }
    total += chan / (a.width * a.height);
  }
  return total / a.channels;
}

/// Explicit Sobel kernels on luminance with clamped borders.
ImageF sobel_reference(const ImageF& img) {
  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  ImageF out(img.width, img.height, 1);
  double mx = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double gx = 0, gy = 0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const int xx = std::clamp(x + j, 0, img.width - 1), yy = std::clamp(y + i, 0, img.height - 1);
          const double l = 0.299 * img.at(xx, yy, 0) + 0.587 * img.at(xx, yy, 1) + 0.114 * img.at(xx, yy, 2);
          gx += kx[i + 1][j + 1] * l;
          gy += ky[i + 1][j + 1] * l;
        }
      out.at(x, y) = std::hypot(gx, gy);
      mx = std::max(mx, out.at(x, y));
    }
  for (double& v : out.data) v = std::pow(v / mx, 5);
  return out;
}

/// Fronto-parallel plane at depth z seen by a 32x32 camera; normals face the camera.
render::RenderBuffers plane_buffers(int w, int h, double z) {
  render::RenderBuffers b;
  b.width = w;
  b.height = h;
  b.depth = ImageF(w, h, 1, z);
  b.alpha = ImageF(w, h, 1, 1.0);
  b.normal = ImageF(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) b.normal.at(x, y, 2) = -1.0;
  return b;
}

CameraView plane_view(int w, int h) {
  CameraView v;
  v.name = "plane";
  v.width = w;
  v.height = h;
  v.intrinsics << 40, 0, w / 2.0, 0, 40, h / 2.0, 0, 0, 1;
  return v;
}

}  // namespace

TEST_CASE("photometric loss") {
  std::mt19937_64 rng(2);
  const ImageF a = random_image(rng, 24, 20, 3);
  CHECK(photometric_loss(a, a, 0.2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(photometric_loss(a, a, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

  ImageF base(16, 16, 3, 0.4), shifted(16, 16, 3, 0.5);
  CHECK(photometric_loss(base, shifted, 0.0) == doctest::Approx(0.1).epsilon(1e-12));

  const ImageF b = random_image(rng, 24, 20, 3);
  CHECK(photometric_loss(a, b, 0.0) == doctest::Approx(photometric_loss(b, a, 0.0)));
  CHECK(photometric_loss(a, b, 0.0) <= 1.0);
  CHECK(std::abs(photometric_loss(a, b, 1.0) - (1.0 - ssim_reference(a, b))) < 1e-6);
  CHECK(std::abs(ssim(a, b) - ssim_reference(a, b)) < 1e-9);

  CHECK_THROWS_AS(photometric_loss(a, ImageF(3, 3, 3), 0.2), ValidationError);
}

TEST_CASE("image gradient weight") {
  SUBCASE("constant image") {
    const auto w = image_gradient_weight(ImageF(10, 10, 3, 0.7));
    for (double v : w.data) CHECK(v == 0.0);
  }
  SUBCASE("vertical step edge peaks at 1 on the edge columns") {
    ImageF img(12, 8, 3, 0.0);
    for (int y = 0; y < 8; ++y)
      for (int x = 6; x < 12; ++x)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = 1.0;
    const auto w = image_gradient_weight(img);
    for (int y = 0; y < 8; ++y) {
      CHECK(w.at(5, y) == doctest::Approx(1.0));
      CHECK(w.at(6, y) == doctest::Approx(1.0));
      CHECK(w.at(2, y) == 0.0);
    }
  }
  SUBCASE("matches explicit Sobel") {
    std::mt19937_64 rng(4);
    const ImageF img = random_image(rng, 17, 13, 3);
    const auto w = image_gradient_weight(img);
    const auto ref = sobel_reference(img);
    for (std::size_t i = 0; i < w.data.size(); ++i) CHECK(std::abs(w.data[i] - ref.data[i]) < 1e-12);
    for (double v : w.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("geometry loss on analytic plane buffers") {
  const int w = 32, h = 32;
  const CameraView view = plane_view(w, h);
  std::mt19937_64 rng(8);
  const ImageF texture = random_image(rng, w, h, 3);
  const ImageF weight = image_gradient_weight(texture);

  SUBCASE("self-consistent plane") {
    const auto b = plane_buffers(w, h, 3.0);
    CHECK(geometry_loss(b, view, weight) < 5e-3);
    CHECK(geometry_loss(b, view, weight) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("normals overwritten to +x") {
    auto b = plane_buffers(w, h, 3.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        b.normal.at(x, y, 0) = 1.0;
        b.normal.at(x, y, 2) = 0.0;
      }
    double mean_weight = 0.0;
    for (double v : weight.data) mean_weight += v;
    mean_weight /= weight.data.size();
    // |(0,0,-1) - (1,0,0)|_1 = 2
    CHECK(geometry_loss(b, view, weight) == doctest::Approx(2.0 * mean_weight).epsilon(1e-12));
  }
  SUBCASE("textureless image gives zero loss whatever the normals") {
    auto b = plane_buffers(w, h, 3.0);
    std::normal_distribution<double> n(0, 1);
    for (double& v : b.normal.data) v = n(rng);
    CHECK(geometry_loss(b, view, image_gradient_weight(ImageF(w, h, 3, 0.5))) == 0.0);
  }
  SUBCASE("translation of both buffers") {
    // content confined to the interior so a shift keeps it in frame
    ImageF img(w, h, 3, 0.2);
    auto b = plane_buffers(w, h, 3.0);
    std::normal_distribution<double> n(0, 1);
    ImageF noisy_normals = b.normal;
    for (int y = 10; y < 18; ++y)
      for (int x = 10; x < 18; ++x) {
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.5 + 0.4 * std::sin(x * 1.3 + y * 0.7 + c);
        for (int c = 0; c < 3; ++c) noisy_normals.at(x, y, c) = n(rng);
      }
    b.normal = noisy_normals;
    const double before = geometry_loss(b, view, image_gradient_weight(img));
    ImageF img2(w, h, 3, 0.2);
    auto b2 = plane_buffers(w, h, 3.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const int sx = (x - 5 + w) % w, sy = (y - 3 + h) % h;
          img2.at(x, y, c) = img.at(sx, sy, c);
          b2.normal.at(x, y, c) = b.normal.at(sx, sy, c);
        }
    CHECK(geometry_loss(b2, view, image_gradient_weight(img2)) == doctest::Approx(before).epsilon(1e-12));
  }
  SUBCASE("degenerate view") {
    auto b = plane_buffers(w, h, 3.0);
    for (double& a : b.alpha.data) a = 0.1;
    CHECK_THROWS_AS(geometry_loss(b, view, weight), DegenerateError);
  }
}

TEST_CASE("sparse loss") {
  const std::vector<double> half(10, 0.5);
  CHECK(std::abs(sparse_loss(half) - 2.0 * std::log(0.5)) < 1e-9);

  const std::vector<double> edge = {0.999999};
  CHECK(sparse_loss(edge) == doctest::Approx(std::log(1.0 - 1e-6) + std::log(1e-6)).epsilon(1e-9));
  CHECK(sparse_loss(std::vector<double>{1.0}) == doctest::Approx(-13.8155).epsilon(1e-4));

  const std::vector<double> mixed = {0.1, 0.3, 0.77, 0.95, 0.5};
  double direct = 0.0;
  for (double s : mixed) direct += std::log(s) + std::log(1 - s);
  CHECK(sparse_loss(mixed) == doctest::Approx(direct / 5.0).epsilon(1e-14));

  CHECK_THROWS_AS(sparse_loss(std::vector<double>{}), ValidationError);

  // strictly concave with an interior maximum at 0.5
  auto f = [](double s) { return sparse_loss(std::vector<double>{s}); };
  const double h = 1e-4;
  for (double s = 0.05; s < 0.96; s += 0.05) {
    const double second = (f(s + h) - 2 * f(s) + f(s - h)) / (h * h);
    CHECK(second < 0.0);
    CHECK(f(s) <= f(0.5) + 1e-15);
  }
}

TEST_CASE("total loss composition") {
  const int w = 32, h = 32;
  CameraView view = plane_view(w, h);
  std::mt19937_64 rng(10);
  view.image = random_image(rng, w, h, 3);
  auto b = plane_buffers(w, h, 3.0);
  b.rgb = random_image(rng, w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) b.normal.at(x, y, 0) = 0.5;  // tilt so L_geo is nonzero
  GaussianCloud cloud;
  for (double s : {0.2, 0.5, 0.9}) cloud.gaussians.push_back(test::make_gaussian(Vec3::Zero(), 0.1, s));

  const double photo = photometric_loss(b.rgb, view.image, 0.2);
  const double geo = geometry_loss(b, view);
  const double sparse = sparse_loss(cloud);

  LossWeights off{0.2, 0.0, 0.0};
  CHECK(total_loss(b, view, cloud, off).total == doctest::Approx(photo));

  LossWeights ones{0.2, 1.0, 1.0};
  const auto br = total_loss(b, view, cloud, ones);
  CHECK(br.total == doctest::Approx(photo + geo + sparse));
  CHECK(br.geometry == doctest::Approx(geo));

  const LossWeights defaults;
  const auto ablated = defaults.without_garl();
  CHECK(ablated.lambda_geo == 0.0);
  CHECK(ablated.lambda_sparse == 0.0);
  CHECK(ablated.lambda_ssim == defaults.lambda_ssim);

  CHECK_THROWS_AS(total_loss(b, view, cloud, LossWeights{1.5, 0, 0}), ConfigError);
}
