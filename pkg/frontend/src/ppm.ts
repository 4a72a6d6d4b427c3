/** Decoder for the binary PPM (P6) images the service returns. */

export interface RgbImage {
  width: number;
  height: number;
  /** RGBA, ready for ImageData. */
  pixels: Uint8ClampedArray<ArrayBuffer>;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d || byte === 0x0c;
}

/** Read the next header token, skipping whitespace and # comments. */
function nextToken(bytes: Uint8Array, pos: number): { token: string; pos: number } {
  while (pos < bytes.length) {
    if (isSpace(bytes[pos])) {
      pos++;
    } else if (bytes[pos] === 0x23) {
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
    } else {
      break;
    }
  }
  const start = pos;
  while (pos < bytes.length && !isSpace(bytes[pos])) pos++;
  if (pos === start) throw new Error("truncated PPM header");
  let token = "";
  for (let i = start; i < pos; i++) token += String.fromCharCode(bytes[i]);
  return { token, pos };
}

export function decodePpm(bytes: Uint8Array): RgbImage {
  let { token, pos } = nextToken(bytes, 0);
  if (token !== "P6") throw new Error(`not a binary PPM image (magic ${JSON.stringify(token)})`);

  const fields: number[] = [];
  for (let i = 0; i < 3; i++) {
    const next = nextToken(bytes, pos);
    pos = next.pos;
    const value = Number(next.token);
    if (!Number.isInteger(value) || value <= 0) {
      throw new Error(`bad PPM header field ${JSON.stringify(next.token)}`);
    }
    fields.push(value);
  }
  const [width, height, maxVal] = fields;
  if (maxVal > 255) throw new Error("PPM maxval above 255 is not supported");

  pos++; // exactly one whitespace byte separates header and pixel data
  const expected = width * height * 3;
  if (bytes.length - pos < expected) throw new Error("truncated PPM pixel data");

  const pixels = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    pixels[i * 4] = bytes[pos + i * 3];
    pixels[i * 4 + 1] = bytes[pos + i * 3 + 1];
    pixels[i * 4 + 2] = bytes[pos + i * 3 + 2];
    pixels[i * 4 + 3] = 255;
  }
  return { width, height, pixels };
}

export function base64ToBytes(encoded: string): Uint8Array {
  const binary = atob(encoded);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return bytes;
}
