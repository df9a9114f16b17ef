export const SERVICE_PORT = 8977;
export const API_BASE = `http://127.0.0.1:${SERVICE_PORT}`;
