#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "attedit/common.hpp"
#include "attedit/image.hpp"
#include "attedit/tensor.hpp"

namespace attedit {

// Pixel <-> latent transform. The identity test codec is exact; learned
// codecs plug in behind the same interface and document their tolerance.
class CodecBackend {
public:
    virtual ~CodecBackend() = default;
    virtual int downscale() const = 0;
    virtual LatentVideo encode(const std::vector<Frame>& frames) const = 0;
    virtual std::vector<Frame> decode(const LatentVideo& z) const = 0;
};

// Maps bytes to [-1, 1] at 1x scale: v = (2u - 255)/255. Quantizing back
// rounds to the exact original byte, so decode(encode(x)) == x.
class IdentityCodec : public CodecBackend {
public:
    int downscale() const override { return 1; }

    LatentVideo encode(const std::vector<Frame>& frames) const override {
        if (frames.empty()) {
            throw ValidationError("encode: no frames");
        }
        int w = frames[0].width, h = frames[0].height;
        for (const Frame& f : frames) {
            if (f.width != w || f.height != h) {
                throw ValidationError("encode: frames disagree in size");
            }
        }
        LatentVideo z(static_cast<int>(frames.size()), 3, h, w);
        for (size_t k = 0; k < frames.size(); k++) {
            for (int y = 0; y < h; y++) {
                for (int x = 0; x < w; x++) {
                    for (int c = 0; c < 3; c++) {
                        double u = frames[k].at(y, x, c);
                        z.data.at(static_cast<int>(k), c, y, x) =
                            static_cast<float>((2.0 * u - 255.0) / 255.0);
                    }
                }
            }
        }
        return z;
    }

    std::vector<Frame> decode(const LatentVideo& z) const override {
        z.validate();
        if (z.channels() != 3) {
            throw ValidationError("decode: identity codec expects 3 channels");
        }
        std::vector<Frame> frames;
        frames.reserve(static_cast<size_t>(z.frames()));
        for (int k = 0; k < z.frames(); k++) {
            Frame f(z.width(), z.height());
            for (int y = 0; y < z.height(); y++) {
                for (int x = 0; x < z.width(); x++) {
                    for (int c = 0; c < 3; c++) {
                        double v = z.data.at(k, c, y, x);
                        double u = std::round((v * 255.0 + 255.0) / 2.0);
                        f.at(y, x, c) = static_cast<uint8_t>(std::min(255.0, std::max(0.0, u)));
                    }
                }
            }
            frames.push_back(std::move(f));
        }
        return frames;
    }
};

}  // namespace attedit
