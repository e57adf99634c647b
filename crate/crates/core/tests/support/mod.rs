pub mod reference_pchip;
