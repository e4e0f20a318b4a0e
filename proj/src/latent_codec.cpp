#include "genfusion/latent_codec.hpp"

#include "genfusion/error.hpp"

namespace genfusion {

Shape LatentCodec::latent_shape(Shape image) const {
    require(factor >= 1, "codec factor must be positive");
    require(image.height % factor == 0 && image.width % factor == 0,
            "image size " + to_string(image) + " is not divisible by codec factor " + std::to_string(factor));
    return Shape{image.channels, image.height / factor, image.width / factor};
}

ImageTensor LatentCodec::encode(const ImageTensor& x) const {
    ImageTensor z(latent_shape(x.shape()));
    const double n = static_cast<double>(factor * factor);
    for (int c = 0; c < z.channels(); ++c)
        for (int y = 0; y < z.height(); ++y)
            for (int xx = 0; xx < z.width(); ++xx) {
                // mean taken about the block's first pixel: exact on constant blocks
                const double base = x.at(c, y * factor, xx * factor);
                double sum = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx) sum += x.at(c, y * factor + dy, xx * factor + dx) - base;
                z.at(c, y, xx) = base + sum / n;
            }
    return z;
}

ImageTensor LatentCodec::decode(const ImageTensor& z) const {
    require(factor >= 1, "codec factor must be positive");
    ImageTensor x(z.channels(), z.height() * factor, z.width() * factor);
    for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < x.height(); ++y)
            for (int xx = 0; xx < x.width(); ++xx) x.at(c, y, xx) = z.at(c, y / factor, xx / factor);
    return x;
}

}  // namespace genfusion
