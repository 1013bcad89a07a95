#ifndef COTKIT_COTKIT_HPP
#define COTKIT_COTKIT_HPP

#include "error.hpp"
#include "io.hpp"
#include "schema.hpp"
#include "okvqa.hpp"
#include "aokvqa.hpp"
#include "chartqa.hpp"
#include "prompting.hpp"
#include "extraction.hpp"
#include "metrics.hpp"
#include "fusion.hpp"
#include "gradcheck.hpp"
#include "train_utils.hpp"
#include "pipeline.hpp"

#endif
