#pragma once

#include "attedit/common.hpp"
#include "attedit/tensor.hpp"
#include "attedit/schedule.hpp"
#include "attedit/prompt.hpp"
#include "attedit/attention_store.hpp"
#include "attedit/attention.hpp"
#include "attedit/denoiser.hpp"
#include "attedit/control.hpp"
#include "attedit/scheduler.hpp"
#include "attedit/image.hpp"
#include "attedit/codec.hpp"
#include "attedit/pipeline.hpp"
#include "attedit/metrics.hpp"
#include "attedit/config.hpp"
#include "attedit/commands.hpp"
