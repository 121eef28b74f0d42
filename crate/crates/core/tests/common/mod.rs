#![allow(dead_code)]

pub mod coco_oracle;
pub mod scanline;
